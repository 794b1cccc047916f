"""Command-line interface for the curation toolkit."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from PIL import Image

from . import __version__
from .blockiness import MIN_SIDE_BLOCKINESS
from .density import DEFAULT_GRID_SIZE, make_grid, kde
from .errors import CurateError
from .ingest import DEFAULT_MIN_SIDE, decode_image, scan_directory
from .manifest import read_manifest, write_manifest, write_text_atomic
from .pipeline import (
    CurationManifest,
    annotate_blockiness,
    build_provider,
    compute_stats,
    density_csv,
    export_report,
    load_config,
    run_curation,
)
from .quality import (
    DEFAULT_GATE,
    DEFAULT_QUALITIES,
    blockiness_samples,
    build_basis,
    estimate_quality,
    load_basis,
    save_basis,
)
from .regions import (
    DEFAULT_K,
    DEFAULT_MAX_SIDE,
    DEFAULT_MIN_SIZE,
    DEFAULT_SIGMA,
    GraphSegmenterCounts,
    RecordedCounts,
    SidecarCounts,
    annotate_region_counts,
    filter_by_blockiness,
    filter_by_regions,
    load_sidecar_counts,
)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_REJECTED = 2


def _parse_qualities(text: str) -> tuple:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid quality list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("quality list is empty")
    return values


def _load_optional_config(args):
    path = getattr(args, "config", None)
    return load_config(path) if path else None


def _pick(flag_value, config_value, default):
    """Explicit flag wins, then config file, then the built-in default."""
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _manifest_root(args) -> Path:
    if args.root is not None:
        return Path(args.root)
    return Path(args.manifest).parent


def cmd_scan(args) -> int:
    cfg = _load_optional_config(args)
    min_side = _pick(args.min_side, cfg and cfg.min_side, DEFAULT_MIN_SIDE)
    records = scan_directory(args.directory, min_side=min_side)
    write_manifest(args.output, records)
    kept = sum(r.kept for r in records)
    print(f"{len(records)} records: {kept} kept, {len(records) - kept} dropped")
    return EXIT_OK


def cmd_compress(args) -> int:
    src = Path(args.directory)
    out = Path(args.output)
    q = max(1, round(100 * args.quality))
    records = scan_directory(src, min_side=0)
    skipped = 0
    for rec in records:
        if not rec.kept:
            skipped += 1
            print(f"skipping undecodable {rec.path}", file=sys.stderr)
            continue
        rgb = decode_image(src / rec.path)
        dest = (out / rec.path).with_suffix(".jpg")
        dest.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(rgb, mode="RGB").save(dest, format="JPEG", quality=q, subsampling=2)
    print(f"wrote {len(records) - skipped} files under {out} at quality {args.quality}")
    return EXIT_OK


def cmd_blockiness(args) -> int:
    cfg = _load_optional_config(args)
    workers = _pick(args.workers, cfg and cfg.workers, 1)
    records = read_manifest(args.manifest)
    recompress_q = None if args.no_recompress else args.recompress_q
    records = annotate_blockiness(
        records, _manifest_root(args), recompress_q=recompress_q, workers=workers
    )
    write_manifest(args.output, records)
    print(f"measured {sum(r.kept for r in records)} records")
    return EXIT_OK


def cmd_density(args) -> int:
    cfg = _load_optional_config(args)
    grid_size = _pick(args.grid_size, cfg and cfg.grid_size, DEFAULT_GRID_SIZE)
    records = read_manifest(args.manifest)
    samples = blockiness_samples(records, manifest_name=str(args.manifest))
    grid = make_grid(samples, grid_size=grid_size)
    write_text_atomic(args.output, density_csv(kde(samples, grid)))
    print(f"wrote {grid_size}-point density curve to {args.output}")
    return EXIT_OK


def cmd_basis_build(args) -> int:
    cfg = _load_optional_config(args)
    ref = _pick(args.ref, cfg and cfg.reference_dir, None)
    if ref is None:
        raise CurateError("--ref (or a config with reference_dir) is required")
    ref_dir = Path(ref)
    qualities = _pick(args.qualities, cfg and cfg.qualities, DEFAULT_QUALITIES)
    grid_size = _pick(args.grid_size, cfg and cfg.grid_size, DEFAULT_GRID_SIZE)
    min_side = _pick(args.min_side, cfg and cfg.min_side, MIN_SIDE_BLOCKINESS)
    workers = _pick(args.workers, cfg and cfg.workers, 1)
    records = scan_directory(ref_dir, min_side=min_side)
    paths = [ref_dir / r.path for r in records if r.kept]
    basis = build_basis(
        paths, qualities=qualities, grid_size=grid_size,
        reference_name=ref_dir.name, workers=workers,
    )
    save_basis(args.output, basis)
    print(f"built basis from {len(paths)} images at qualities {list(basis.qualities)}")
    return EXIT_OK


def cmd_quality(args) -> int:
    cfg = _load_optional_config(args)
    gate = _pick(args.gate, cfg and cfg.gate, DEFAULT_GATE)
    records = read_manifest(args.manifest)
    samples = blockiness_samples(records, manifest_name=str(args.manifest))
    basis = load_basis(args.basis)
    estimate = estimate_quality(samples, basis, gate=gate)
    verdict = "accepted" if estimate.accepted else "rejected"
    print(f"{'quality':>10}  {'KL':>12}  {'weight':>8}", file=sys.stderr)
    for q, kl, w in zip(estimate.qualities, estimate.kl_values, estimate.weights):
        print(f"{q:>10.2f}  {kl:>12.6f}  {w:>8.4f}", file=sys.stderr)
    print(f"q_hat = {estimate.q_hat:.3f} ({verdict} at gate {gate})", file=sys.stderr)
    print(json.dumps(estimate.to_dict()))
    return EXIT_OK if estimate.accepted else EXIT_REJECTED


def _provider_from_args(args, cfg):
    spec = cfg.provider if cfg is not None else None
    kind = _pick(args.provider, spec and spec.kind, None)
    if kind is None:
        raise CurateError("--provider (or a config with one) is required")
    if kind == "sidecar":
        sidecar = _pick(args.sidecar, spec and spec.sidecar, None)
        if sidecar is None:
            raise CurateError("sidecar provider needs --sidecar <counts.json>")
        return SidecarCounts(load_sidecar_counts(sidecar))
    if kind == "graph":
        return GraphSegmenterCounts(
            k=_pick(args.k, spec and spec.k, DEFAULT_K),
            min_size=_pick(args.min_size, spec and spec.min_size, DEFAULT_MIN_SIZE),
            sigma=_pick(args.sigma, spec and spec.sigma, DEFAULT_SIGMA),
            max_side=_pick(args.max_side, spec and spec.max_side, DEFAULT_MAX_SIDE),
        )
    raise CurateError(f"unknown provider {kind!r}")


def cmd_regions(args) -> int:
    cfg = _load_optional_config(args)
    provider = _provider_from_args(args, cfg)
    records = read_manifest(args.manifest)
    records = annotate_region_counts(records, provider, root=_manifest_root(args))
    write_manifest(args.output, records)
    print(f"annotated {sum(r.kept for r in records)} records with region counts")
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = _load_optional_config(args)
    fc = cfg.filter if cfg is not None else None
    min_regions = _pick(args.min_regions, fc and fc.theta, 0)
    max_blockiness = _pick(args.max_blockiness, fc and fc.theta_prime, None)
    records = read_manifest(args.manifest)
    if min_regions > 0:
        records = filter_by_regions(records, RecordedCounts(), min_regions)
    if max_blockiness is not None:
        records = filter_by_blockiness(records, max_blockiness)
    write_manifest(args.output, records)
    kept = sum(r.kept for r in records)
    print(f"{kept} of {len(records)} records kept")
    return EXIT_OK


def cmd_report(args) -> int:
    stats = []
    for path in args.manifests:
        records = read_manifest(path)
        stats.append(compute_stats(CurationManifest(name=Path(path).stem, records=records)))
    written = export_report(stats, {}, args.output_dir)
    print("\n".join(str(p) for p in written))
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.workers is not None:
        import dataclasses

        config = dataclasses.replace(config, workers=args.workers)
    manifests, report = run_curation(config)
    rejected = []
    for manifest in manifests:
        estimate = manifest.quality_estimate
        verdict = "accepted" if estimate.accepted else "rejected"
        kept = sum(r.kept for r in manifest.records)
        print(f"{manifest.name}: q_hat={estimate.q_hat:.3f} {verdict}, "
              f"{kept}/{len(manifest.records)} records kept")
        if not estimate.accepted:
            rejected.append(manifest.name)
    print(f"report written to {config.output_dir / 'report.json'}")
    return EXIT_REJECTED if rejected else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curate",
        description="Curate image datasets by compression quality and object-region count.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="enumerate images under a directory into a manifest")
    p.add_argument("directory")
    p.add_argument("--min-side", type=int, default=None,
                   help=f"drop images with a side below this (default {DEFAULT_MIN_SIDE})")
    p.add_argument("--config", default=None, help="config file supplying defaults")
    p.add_argument("-o", "--output", required=True, help="manifest to write (JSON Lines)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("compress", help="recompress a directory tree as JPEG files")
    p.add_argument("directory")
    p.add_argument("--quality", type=float, required=True, help="JPEG quality in (0, 1]")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("blockiness", help="fill the blockiness field of a manifest")
    p.add_argument("manifest")
    p.add_argument("--root", default=None,
                   help="directory record paths are relative to (default: manifest dir)")
    p.add_argument("--recompress-q", type=float, default=1.0,
                   help="JPEG-recompress at this quality before measuring (default 1.0)")
    p.add_argument("--no-recompress", action="store_true",
                   help="measure files as-is, without recompression")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_blockiness)

    p = sub.add_parser("density", help="write a manifest's blockiness density as CSV")
    p.add_argument("manifest")
    p.add_argument("--grid-size", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("basis", help="reference distribution commands")
    basis_sub = p.add_subparsers(dest="basis_command", required=True)
    b = basis_sub.add_parser("build", help="build reference densities from a clean set")
    b.add_argument("--ref", default=None, help="directory of clean reference images")
    b.add_argument("--qualities", type=_parse_qualities, default=None,
                   help="comma-separated levels (default 1.0,0.95,0.85,0.75,0.5)")
    b.add_argument("--grid-size", type=int, default=None)
    b.add_argument("--min-side", type=int, default=None)
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--config", default=None)
    b.add_argument("-o", "--output", required=True, help="basis JSON to write")
    b.set_defaults(func=cmd_basis_build)

    p = sub.add_parser("quality", help="estimate a dataset's quality against a basis")
    p.add_argument("--manifest", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--gate", type=float, default=None,
                   help=f"acceptance threshold (default {DEFAULT_GATE})")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("regions", help="annotate a manifest with region counts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--provider", choices=("sidecar", "graph"), default=None)
    p.add_argument("--sidecar", default=None, help="JSON map of path to count")
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--min-size", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--max-side", type=int, default=None)
    p.add_argument("--root", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("filter", help="apply region/blockiness thresholds to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--min-regions", type=int, default=None)
    p.add_argument("--max-blockiness", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("report", help="summarize manifests into report files")
    p.add_argument("manifests", nargs="+")
    p.add_argument("-o", "--output-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the full curation pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None, help="override the config's workers")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CurateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
