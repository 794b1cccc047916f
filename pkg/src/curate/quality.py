"""Dataset quality estimation against reference blockiness distributions.

A clean reference set is recompressed at each quality level in S and the
resulting blockiness samples are fitted into one density per level, all on
a shared grid.  A candidate dataset's own blockiness density (measured
after recompression at q=1.0) is compared to each reference density by KL
divergence; softmax of the negative divergences weights the quality
levels, and the weighted average is the dataset's estimated quality.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .blockiness import blockiness
from .density import DEFAULT_GRID_SIZE, Density, kde, kl_divergence, shared_grid
from .errors import ConfigError, DecodeError, MissingFieldError
from .ingest import decode_image, jpeg_recompress, luma

DEFAULT_QUALITIES = (1.0, 0.95, 0.85, 0.75, 0.5)
DEFAULT_GATE = 0.9
MIN_REFERENCE_IMAGES = 10

BASIS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BasisSet:
    """Reference densities, one per quality level, on one shared grid."""

    reference_name: str
    qualities: tuple
    densities: tuple
    grid: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "qualities", tuple(float(q) for q in self.qualities))
        object.__setattr__(self, "densities", tuple(self.densities))
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        if len(set(self.qualities)) != len(self.qualities):
            raise ValueError("duplicate quality levels")
        if len(self.densities) != len(self.qualities):
            raise ValueError("need one density per quality level")
        for d in self.densities:
            if not np.array_equal(d.grid, self.grid):
                raise ValueError("all basis densities must share the basis grid")


@dataclass(frozen=True)
class QualityEstimate:
    """Weighted-average quality of one dataset plus its evidence."""

    q_hat: float
    qualities: tuple
    weights: tuple
    kl_values: tuple
    accepted: bool
    gate: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "q_hat": self.q_hat,
            "qualities": list(self.qualities),
            "weights": list(self.weights),
            "kl_values": list(self.kl_values),
            "accepted": self.accepted,
            "gate": self.gate,
            "sample_count": self.sample_count,
        }


@dataclass(frozen=True)
class SourceVerdict:
    """Per-dataset gating outcome for the selection report."""

    name: str
    estimate: QualityEstimate


def softmax_neg(values) -> np.ndarray:
    """softmax(-values), computed with max-shift for numeric stability."""
    arr = -np.asarray(values, dtype=np.float64)
    arr -= arr.max()
    exps = np.exp(arr)
    return exps / exps.sum()


def _reference_samples(paths, quality: float, workers: int = 0) -> np.ndarray:
    def one(path):
        return blockiness(luma(jpeg_recompress(decode_image(path), quality)))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, paths)), dtype=np.float64)
    return np.array([one(p) for p in paths], dtype=np.float64)


def build_basis(reference_paths, qualities=DEFAULT_QUALITIES,
                grid_size: int = DEFAULT_GRID_SIZE, reference_name: str = "reference",
                workers: int = 0) -> BasisSet:
    """Fit one reference density per quality level on a shared grid.

    Each reference image is decoded once per quality, recompressed, and
    measured; per-image decode failures are collected and reported
    together.  Needs at least MIN_REFERENCE_IMAGES usable images.
    """
    paths = [Path(p) for p in reference_paths]
    failures = []
    usable = []
    for p in paths:
        try:
            decode_image(p)
        except DecodeError as exc:
            failures.append(str(exc))
        else:
            usable.append(p)
    if len(usable) < MIN_REFERENCE_IMAGES:
        detail = f"; failures: {failures}" if failures else ""
        raise ConfigError(
            f"reference set has {len(usable)} usable images, "
            f"need at least {MIN_REFERENCE_IMAGES}{detail}"
        )
    qualities = tuple(float(q) for q in qualities)
    sample_sets = {q: _reference_samples(usable, q, workers=workers) for q in qualities}
    grid = shared_grid(list(sample_sets.values()), grid_size=grid_size)
    densities = tuple(kde(sample_sets[q], grid) for q in qualities)
    return BasisSet(
        reference_name=reference_name, qualities=qualities, densities=densities, grid=grid
    )


def estimate_quality(samples, basis: BasisSet, gate: float = DEFAULT_GATE) -> QualityEstimate:
    """Estimate dataset quality from its blockiness samples.

    samples must be measured under recompression at q=1.0 so they are
    comparable with the basis.  The estimate is the softmax(-KL)-weighted
    average of the basis quality levels.
    """
    arr = np.asarray(samples, dtype=np.float64)
    p = kde(arr, basis.grid)
    kl = np.array([kl_divergence(p, d) for d in basis.densities])
    weights = softmax_neg(kl)
    q_hat = float(np.dot(weights, np.asarray(basis.qualities)))
    return QualityEstimate(
        q_hat=q_hat,
        qualities=basis.qualities,
        weights=tuple(float(w) for w in weights),
        kl_values=tuple(float(v) for v in kl),
        accepted=bool(q_hat >= gate),
        gate=float(gate),
        sample_count=int(arr.size),
    )


def blockiness_samples(records, manifest_name: str = "manifest") -> np.ndarray:
    """Blockiness values of kept records; error if any kept record lacks one."""
    values = []
    for rec in records:
        if not rec.kept:
            continue
        if rec.blockiness is None:
            raise MissingFieldError(
                f"{manifest_name}: record {rec.path!r} has no blockiness value"
            )
        values.append(rec.blockiness)
    return np.array(values, dtype=np.float64)


def select_sources(datasets, basis: BasisSet, gate: float = DEFAULT_GATE):
    """Partition (name, records) datasets into accepted and rejected lists.

    Returns two lists of SourceVerdict; their union covers the input and
    order follows the input order.
    """
    accepted = []
    rejected = []
    for name, records in datasets:
        samples = blockiness_samples(records, manifest_name=name)
        estimate = estimate_quality(samples, basis, gate=gate)
        verdict = SourceVerdict(name=name, estimate=estimate)
        (accepted if estimate.accepted else rejected).append(verdict)
    return accepted, rejected


def save_basis(path, basis: BasisSet) -> None:
    """Serialize a basis to versioned JSON (atomically via the manifest writer)."""
    from .manifest import write_text_atomic

    doc = {
        "format_version": BASIS_FORMAT_VERSION,
        "tool_version": _version,
        "reference_name": basis.reference_name,
        "qualities": list(basis.qualities),
        "grid": basis.grid.tolist(),
        "densities": [
            {
                "quality": q,
                "pmf": d.pmf.tolist(),
                "bandwidth": d.bandwidth,
                "sample_count": d.sample_count,
            }
            for q, d in zip(basis.qualities, basis.densities)
        ],
    }
    write_text_atomic(path, json.dumps(doc, indent=2) + "\n")


def load_basis(path) -> BasisSet:
    """Load a basis saved by save_basis."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != BASIS_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported basis format_version {version!r}")
    grid = np.asarray(doc["grid"], dtype=np.float64)
    qualities = tuple(float(q) for q in doc["qualities"])
    densities = tuple(
        Density(
            grid=grid,
            pmf=np.asarray(entry["pmf"], dtype=np.float64),
            bandwidth=float(entry["bandwidth"]),
            sample_count=int(entry["sample_count"]),
        )
        for entry in doc["densities"]
    )
    return BasisSet(
        reference_name=doc.get("reference_name", "reference"),
        qualities=qualities,
        densities=densities,
        grid=grid,
    )
