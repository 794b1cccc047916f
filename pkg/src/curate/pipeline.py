"""End-to-end curation: scan, measure, gate, filter, and report."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import __version__ as _pillow_version
from PIL import features as _pil_features

from . import __version__ as _tool_version
from .blockiness import MIN_SIDE_BLOCKINESS, measure_file
from .density import DEFAULT_GRID_SIZE, MIN_GRID_SIZE, kde
from .errors import ConfigError, DecodeError, ImageTooSmallError, MissingFieldError
from .ingest import DEFAULT_MIN_SIDE, DropReason, ImageRecord, scan_directory
from .manifest import write_manifest, write_text_atomic
from .quality import (
    DEFAULT_GATE,
    DEFAULT_QUALITIES,
    QualityEstimate,
    blockiness_samples,
    build_basis,
    estimate_quality,
    save_basis,
)
from .regions import (
    DEFAULT_K,
    DEFAULT_MAX_SIDE,
    DEFAULT_MIN_SIZE,
    DEFAULT_SIGMA,
    FilterConfig,
    GraphSegmenterCounts,
    SidecarCounts,
    filter_by_blockiness,
    filter_by_regions,
    load_sidecar_counts,
)

# Measurement always recompresses at full quality first so heterogeneous
# containers and codecs become comparable.
MEASURE_RECOMPRESS_Q = 1.0

_DROP_KEYS = [r.value for r in DropReason if r is not DropReason.NONE]


@dataclass(frozen=True)
class SourceSpec:
    """One candidate dataset: a name and its image directory."""

    name: str
    directory: Path


@dataclass(frozen=True)
class ProviderSpec:
    """Which region-count provider to use and its parameters."""

    kind: str
    sidecar: Path | None = None
    k: float = DEFAULT_K
    min_size: int = DEFAULT_MIN_SIZE
    sigma: float = DEFAULT_SIGMA
    max_side: int = DEFAULT_MAX_SIDE


@dataclass(frozen=True)
class CurationConfig:
    """Everything one curation run needs."""

    sources: tuple
    reference_dir: Path
    output_dir: Path
    qualities: tuple = DEFAULT_QUALITIES
    gate: float = DEFAULT_GATE
    min_side: int = DEFAULT_MIN_SIDE
    grid_size: int = DEFAULT_GRID_SIZE
    filter: FilterConfig = FilterConfig()
    provider: ProviderSpec | None = None
    sample_limit: int | None = None
    seed: int | None = None
    workers: int = 1
    config_hash: str = ""


@dataclass
class CurationManifest:
    """Final record list of one source plus its quality estimate."""

    name: str
    records: list
    quality_estimate: QualityEstimate | None = None


@dataclass(frozen=True)
class DatasetStats:
    """Aggregates over the kept records of one manifest."""

    name: str
    n_images: int
    avg_pixels: float | None
    median_blockiness: float | None
    avg_region_count: float | None
    quality_estimate: QualityEstimate | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_images": self.n_images,
            "avg_pixels": self.avg_pixels,
            "median_blockiness": self.median_blockiness,
            "avg_region_count": self.avg_region_count,
        }


_TOP_LEVEL_KEYS = {
    "sources", "reference_dir", "output_dir", "qualities", "gate", "min_side",
    "grid_size", "filter", "provider", "sample_limit", "seed", "workers",
}
_FILTER_KEYS = {"min_regions", "max_blockiness"}
_PROVIDER_KEYS = {"kind", "path", "k", "min_size", "sigma", "max_side"}

# Keys that do not change what is computed, only where/how fast; excluded
# from the config hash so reports stay byte-identical across them.
_NON_SEMANTIC_KEYS = {"workers", "output_dir"}


def semantic_hash(doc: dict) -> str:
    """Hash of the configuration with non-semantic keys removed."""
    semantic = {k: v for k, v in doc.items() if k not in _NON_SEMANTIC_KEYS}
    canonical = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def codec_identity() -> str:
    """Identify the JPEG codec; recompression results depend on it."""
    jpg = _pil_features.version("jpg") or "unknown"
    return f"Pillow/{_pillow_version} libjpeg/{jpg} subsampling=4:2:0"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def load_config(path) -> CurationConfig:
    """Parse and validate a YAML curation config.

    Relative paths inside the file resolve against the file's directory.
    Unknown keys are errors so typos cannot silently change a run.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    _require(not unknown, f"{path}: unknown config keys {sorted(unknown)}")
    base = path.parent

    raw_sources = doc.get("sources")
    _require(isinstance(raw_sources, list) and raw_sources, f"{path}: 'sources' must be a nonempty list")
    sources = []
    names = set()
    for i, entry in enumerate(raw_sources):
        _require(
            isinstance(entry, dict) and set(entry) == {"name", "dir"},
            f"{path}: sources[{i}] must be a mapping with 'name' and 'dir'",
        )
        name = str(entry["name"])
        _require(name not in names, f"{path}: duplicate source name {name!r}")
        names.add(name)
        sources.append(SourceSpec(name=name, directory=base / str(entry["dir"])))

    _require("reference_dir" in doc, f"{path}: 'reference_dir' is required")
    _require("output_dir" in doc, f"{path}: 'output_dir' is required")
    reference_dir = base / str(doc["reference_dir"])
    output_dir = base / str(doc["output_dir"])

    qualities = tuple(float(q) for q in doc.get("qualities", DEFAULT_QUALITIES))
    _require(len(qualities) >= 1, f"{path}: 'qualities' must be nonempty")
    _require(len(set(qualities)) == len(qualities), f"{path}: duplicate quality levels")
    _require(all(0.0 < q <= 1.0 for q in qualities), f"{path}: qualities must lie in (0, 1]")

    gate = float(doc.get("gate", DEFAULT_GATE))
    _require(0.0 <= gate <= 1.0, f"{path}: gate must lie in [0, 1]")

    min_side = int(doc.get("min_side", DEFAULT_MIN_SIDE))
    _require(
        min_side >= MIN_SIDE_BLOCKINESS,
        f"{path}: min_side must be at least {MIN_SIDE_BLOCKINESS} "
        f"(smaller images cannot be measured)",
    )

    grid_size = int(doc.get("grid_size", DEFAULT_GRID_SIZE))
    _require(grid_size >= MIN_GRID_SIZE, f"{path}: grid_size must be at least {MIN_GRID_SIZE}")

    raw_filter = doc.get("filter", {})
    _require(isinstance(raw_filter, dict), f"{path}: 'filter' must be a mapping")
    unknown = set(raw_filter) - _FILTER_KEYS
    _require(not unknown, f"{path}: unknown filter keys {sorted(unknown)}")
    theta = int(raw_filter.get("min_regions", 0))
    theta_prime = raw_filter.get("max_blockiness")
    try:
        filter_config = FilterConfig(
            theta=theta, theta_prime=None if theta_prime is None else float(theta_prime)
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    provider = None
    raw_provider = doc.get("provider")
    if raw_provider is not None:
        _require(isinstance(raw_provider, dict), f"{path}: 'provider' must be a mapping")
        unknown = set(raw_provider) - _PROVIDER_KEYS
        _require(not unknown, f"{path}: unknown provider keys {sorted(unknown)}")
        kind = raw_provider.get("kind")
        _require(kind in ("sidecar", "graph"), f"{path}: provider kind must be 'sidecar' or 'graph'")
        if kind == "sidecar":
            _require("path" in raw_provider, f"{path}: sidecar provider needs 'path'")
            provider = ProviderSpec(kind=kind, sidecar=base / str(raw_provider["path"]))
        else:
            provider = ProviderSpec(
                kind=kind,
                k=float(raw_provider.get("k", DEFAULT_K)),
                min_size=int(raw_provider.get("min_size", DEFAULT_MIN_SIZE)),
                sigma=float(raw_provider.get("sigma", DEFAULT_SIGMA)),
                max_side=int(raw_provider.get("max_side", DEFAULT_MAX_SIDE)),
            )
    _require(
        filter_config.theta == 0 or provider is not None,
        f"{path}: a region threshold needs an explicit provider (thresholds are "
        f"calibrated per provider)",
    )

    sample_limit = doc.get("sample_limit")
    seed = doc.get("seed")
    _require(
        sample_limit is None or seed is not None,
        f"{path}: 'seed' is required whenever 'sample_limit' is set",
    )

    workers = int(doc.get("workers", 1))
    _require(workers >= 1, f"{path}: workers must be at least 1")

    return CurationConfig(
        sources=tuple(sources),
        reference_dir=reference_dir,
        output_dir=output_dir,
        qualities=qualities,
        gate=gate,
        min_side=min_side,
        grid_size=grid_size,
        filter=filter_config,
        provider=provider,
        sample_limit=None if sample_limit is None else int(sample_limit),
        seed=None if seed is None else int(seed),
        workers=workers,
        config_hash=semantic_hash(doc),
    )


def build_provider(spec: ProviderSpec):
    """Instantiate the region-count provider a spec describes."""
    if spec.kind == "sidecar":
        return SidecarCounts(load_sidecar_counts(spec.sidecar))
    if spec.kind == "graph":
        return GraphSegmenterCounts(
            k=spec.k, min_size=spec.min_size, sigma=spec.sigma, max_side=spec.max_side
        )
    raise ConfigError(f"unknown provider kind {spec.kind!r}")


def sample_records(records, limit: int | None, seed: int | None) -> list:
    """Seeded subsample of a record list, stable across platforms.

    Records are sorted by path before drawing so the PRNG consumes a
    platform-independent sequence; the sample is re-sorted afterwards.
    """
    records = sorted(records, key=lambda r: r.path)
    if limit is None or limit >= len(records):
        return records
    if seed is None:
        raise ConfigError("sampling requires a seed")
    chosen = random.Random(seed).sample(records, limit)
    return sorted(chosen, key=lambda r: r.path)


def annotate_blockiness(records, root, recompress_q: float | None = MEASURE_RECOMPRESS_Q,
                        workers: int = 1) -> list:
    """Fill the blockiness field of every kept record.

    Files that vanished or are too small to measure are dropped with the
    matching reason instead of aborting the whole run.
    """
    root = Path(root)

    def one(rec: ImageRecord) -> ImageRecord:
        if not rec.kept:
            return rec
        try:
            value = measure_file(root / rec.path, recompress_q=recompress_q)
        except ImageTooSmallError:
            return dataclasses.replace(
                rec, kept=False, drop_reason=DropReason.TOO_SMALL.value
            )
        except DecodeError:
            return dataclasses.replace(
                rec, kept=False, drop_reason=DropReason.DECODE_ERROR.value
            )
        return dataclasses.replace(rec, blockiness=float(value))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, records))
    return [one(r) for r in records]


def compute_stats(manifest: CurationManifest) -> DatasetStats:
    """Aggregate kept records: count, mean pixels, median blockiness,
    mean region count.

    An empty kept set yields n_images = 0 with unset aggregates.  Median
    over an even count is the mean of the two central values.
    """
    kept = [r for r in manifest.records if r.kept]
    if not kept:
        return DatasetStats(
            name=manifest.name, n_images=0, avg_pixels=None,
            median_blockiness=None, avg_region_count=None,
            quality_estimate=manifest.quality_estimate,
        )
    for rec in kept:
        if rec.pixels is None:
            raise MissingFieldError(f"{manifest.name}: record {rec.path!r} has no pixel count")
        if rec.blockiness is None:
            raise MissingFieldError(f"{manifest.name}: record {rec.path!r} has no blockiness")
    counts = [r.region_count for r in kept if r.region_count is not None]
    return DatasetStats(
        name=manifest.name,
        n_images=len(kept),
        avg_pixels=float(np.mean([r.pixels for r in kept])),
        median_blockiness=float(np.median([r.blockiness for r in kept])),
        avg_region_count=float(np.mean(counts)) if counts else None,
        quality_estimate=manifest.quality_estimate,
    )


def density_csv(density) -> str:
    """Two-column CSV (grid point, pmf), one row per grid point, no header.

    repr of a Python float round-trips exactly, so the curve can be
    reloaded without precision loss.
    """
    return "\n".join(
        f"{float(g)!r},{float(p)!r}" for g, p in zip(density.grid, density.pmf)
    ) + "\n"


def _drop_counts(records) -> dict:
    counts = {key: 0 for key in _DROP_KEYS}
    for rec in records:
        if not rec.kept:
            counts[rec.drop_reason] += 1
    return counts


def export_report(stats, estimates, output_dir, provenance=None, densities=None,
                  extras=None) -> list:
    """Write report.json, report.txt, and per-source density CSVs.

    stats: list of DatasetStats; estimates: name -> QualityEstimate;
    densities: name -> Density; extras: name -> dict merged into the
    source's JSON row.  Returns the written paths.  Output contains no
    timestamps, so identical inputs produce identical bytes.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    estimates = estimates or {}
    densities = densities or {}
    extras = extras or {}
    written = []

    rows = []
    for st in stats:
        estimate = estimates.get(st.name, st.quality_estimate)
        row = st.to_dict()
        row["quality"] = estimate.to_dict() if estimate is not None else None
        row.update(extras.get(st.name, {}))
        rows.append(row)
    report = {"provenance": provenance or {}, "sources": rows}
    json_path = output_dir / "report.json"
    write_text_atomic(json_path, json.dumps(report, indent=2) + "\n")
    written.append(json_path)

    header = ["name", "images", "avg_pixels", "median_blockiness", "q_hat", "verdict"]
    lines = ["\t".join(header)]
    for st in stats:
        estimate = estimates.get(st.name, st.quality_estimate)
        q_hat = f"{estimate.q_hat:.3f}" if estimate is not None else "-"
        verdict = "-"
        if estimate is not None:
            verdict = "accepted" if estimate.accepted else "rejected"
        lines.append(
            "\t".join(
                [
                    st.name,
                    str(st.n_images),
                    "-" if st.avg_pixels is None else f"{st.avg_pixels:.1f}",
                    "-" if st.median_blockiness is None else f"{st.median_blockiness:.4f}",
                    q_hat,
                    verdict,
                ]
            )
        )
    txt_path = output_dir / "report.txt"
    write_text_atomic(txt_path, "\n".join(lines) + "\n")
    written.append(txt_path)

    for name in sorted(densities):
        csv_path = output_dir / f"{name}_density.csv"
        write_text_atomic(csv_path, density_csv(densities[name]))
        written.append(csv_path)
    return written


def run_curation(config: CurationConfig):
    """Run the full curation pipeline and write all outputs.

    Returns (manifests, report dict).  Accepted sources get a curated
    manifest file; rejected sources appear in the report only.
    """
    for src in config.sources:
        _require(src.directory.is_dir(), f"source directory missing: {src.directory}")
    _require(config.reference_dir.is_dir(), f"reference directory missing: {config.reference_dir}")
    provider = build_provider(config.provider) if config.provider is not None else None

    measured = {}
    for src in config.sources:
        records = scan_directory(src.directory, min_side=config.min_side)
        records = sample_records(records, config.sample_limit, config.seed)
        measured[src.name] = annotate_blockiness(
            records, src.directory, recompress_q=MEASURE_RECOMPRESS_Q, workers=config.workers
        )

    reference = scan_directory(config.reference_dir, min_side=config.min_side)
    reference_paths = [config.reference_dir / r.path for r in reference if r.kept]
    basis = build_basis(
        reference_paths,
        qualities=config.qualities,
        grid_size=config.grid_size,
        reference_name=config.reference_dir.name,
        workers=config.workers,
    )

    manifests = []
    stats_list = []
    estimates = {}
    densities = {}
    extras = {}
    for src in config.sources:
        records = measured[src.name]
        samples = blockiness_samples(records, manifest_name=src.name)
        estimate = estimate_quality(samples, basis, gate=config.gate)
        estimates[src.name] = estimate
        densities[src.name] = kde(samples, basis.grid)
        if estimate.accepted:
            if provider is not None:
                records = filter_by_regions(
                    records, provider, config.filter.theta, root=src.directory
                )
            if config.filter.theta_prime is not None:
                records = filter_by_blockiness(records, config.filter.theta_prime)
        manifest = CurationManifest(name=src.name, records=records, quality_estimate=estimate)
        manifests.append(manifest)
        stats_list.append(compute_stats(manifest))
        extras[src.name] = {
            "scanned": len(records),
            "drops": _drop_counts(records),
            "manifest": f"{src.name}.jsonl" if estimate.accepted else None,
        }

    config.output_dir.mkdir(parents=True, exist_ok=True)
    save_basis(config.output_dir / "basis.json", basis)
    for manifest in manifests:
        if manifest.quality_estimate.accepted:
            write_manifest(config.output_dir / f"{manifest.name}.jsonl", manifest.records)

    provenance = {
        "tool_version": _tool_version,
        "codec": codec_identity(),
        "config_hash": config.config_hash,
        "gate": config.gate,
        "qualities": list(config.qualities),
        "reference": basis.reference_name,
    }
    export_report(
        stats_list, estimates, config.output_dir,
        provenance=provenance, densities=densities, extras=extras,
    )
    with open(config.output_dir / "report.json", "r", encoding="utf-8") as fh:
        report = json.load(fh)
    return manifests, report
