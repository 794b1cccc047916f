"""Region counting providers and manifest filters.

Region counts come either from a sidecar JSON file (externally computed,
e.g. by a segmentation model) or from a built-in classical graph-based
segmenter used as a desk-scale proxy.  Thresholds calibrated for one
provider do not transfer to another, so configuration always names the
provider explicitly next to the threshold.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import scipy.ndimage
from PIL import Image

from .errors import MissingCountError, MissingFieldError, SidecarError
from .ingest import DropReason, ImageRecord, decode_image

DEFAULT_K = 300.0
DEFAULT_MIN_SIZE = 20
DEFAULT_SIGMA = 0.8
DEFAULT_MAX_SIDE = 512


@dataclasses.dataclass(frozen=True)
class FilterConfig:
    """Thresholds for manifest filtering.

    theta drops records with region count below it; theta_prime, when
    set, drops records with blockiness above it.
    """

    theta: int = 0
    theta_prime: float | None = None

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")
        if self.theta_prime is not None and self.theta_prime < 0:
            raise ValueError(f"theta_prime must be nonnegative, got {self.theta_prime}")


def _reject_duplicate_keys(pairs):
    seen = set()
    out = {}
    for key, value in pairs:
        if key in seen:
            raise SidecarError(f"duplicate key {key!r}")
        seen.add(key)
        out[key] = value
    return out


def load_sidecar_counts(path) -> dict:
    """Load a JSON object mapping relative paths to region counts.

    Counts must be nonnegative integers; duplicate keys and non-object
    documents are errors.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh, object_pairs_hook=_reject_duplicate_keys)
    except SidecarError as exc:
        raise SidecarError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SidecarError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise SidecarError(f"{path}: expected a JSON object at the top level")
    for key, value in data.items():
        if isinstance(value, bool) or not isinstance(value, int):
            raise SidecarError(f"{path}: count for {key!r} must be an integer, got {value!r}")
        if value < 0:
            raise SidecarError(f"{path}: count for {key!r} must be nonnegative, got {value}")
    return data


class _UnionFind:
    """Disjoint sets over pixel indices, tracking component sizes and
    the max internal edge weight seen so far."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.internal = [0.0] * n
        self.count = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int, weight: float) -> None:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = max(self.internal[a], self.internal[b], weight)
        self.count -= 1


def _grid_edges(pixels: np.ndarray):
    """Weighted 4-connected edges of an HxWx3 float image.

    Returns (a_indices, b_indices, weights) with weights = Euclidean RGB
    distance between the two endpoint pixels.
    """
    h, w = pixels.shape[:2]
    idx = np.arange(h * w).reshape(h, w)
    flat = pixels.reshape(h * w, 3)

    right_a = idx[:, :-1].ravel()
    right_b = idx[:, 1:].ravel()
    down_a = idx[:-1, :].ravel()
    down_b = idx[1:, :].ravel()
    a = np.concatenate([right_a, down_a])
    b = np.concatenate([right_b, down_b])
    weights = np.sqrt(((flat[a] - flat[b]) ** 2).sum(axis=1))
    return a, b, weights


def _segment(pixels: np.ndarray, k: float, min_size: int) -> int:
    """Graph-based segmentation over the 4-connected grid; returns the
    component count.

    Edges are processed in ascending weight order (ties broken by edge
    index, so the result is deterministic); two components merge when the
    edge weight is within both sides' internal variation plus k/|C|.
    Components smaller than min_size are merged into a neighbor in a
    final pass.
    """
    h, w = pixels.shape[:2]
    a, b, weights = _grid_edges(pixels)
    order = np.lexsort((np.arange(weights.size), weights))
    uf = _UnionFind(h * w)
    for e in order:
        ra, rb = uf.find(int(a[e])), uf.find(int(b[e]))
        if ra == rb:
            continue
        wgt = float(weights[e])
        tau_a = uf.internal[ra] + k / uf.size[ra]
        tau_b = uf.internal[rb] + k / uf.size[rb]
        if wgt <= tau_a and wgt <= tau_b:
            uf.union(ra, rb, wgt)
    if min_size > 1:
        for e in order:
            ra, rb = uf.find(int(a[e])), uf.find(int(b[e]))
            if ra == rb:
                continue
            if uf.size[ra] < min_size or uf.size[rb] < min_size:
                uf.union(ra, rb, float(weights[e]))
    return uf.count


def count_regions_graph(rgb: np.ndarray, k: float = DEFAULT_K,
                        min_size: int = DEFAULT_MIN_SIZE, sigma: float = DEFAULT_SIGMA,
                        max_side: int = DEFAULT_MAX_SIDE) -> int:
    """Count object regions in a color image with a classical segmenter.

    The image is downscaled so its max side is at most max_side, smoothed
    per channel with a Gaussian of the given sigma, then segmented.
    """
    arr = np.asarray(rgb)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    h, w = arr.shape[:2]
    scale = max(h, w) / max_side
    if scale > 1.0:
        new_w, new_h = max(1, round(w / scale)), max(1, round(h / scale))
        img = Image.fromarray(arr.astype(np.uint8), mode="RGB")
        arr = np.asarray(img.resize((new_w, new_h), Image.BILINEAR))
    pixels = arr.astype(np.float64)
    if sigma > 0:
        for c in range(3):
            pixels[:, :, c] = scipy.ndimage.gaussian_filter(pixels[:, :, c], sigma=sigma)
    return _segment(pixels, k=float(k), min_size=int(min_size))


class SidecarCounts:
    """Region counts served from a preloaded path -> count map."""

    kind = "sidecar"

    def __init__(self, counts: dict):
        self.counts = counts

    def count(self, record: ImageRecord, root=None) -> int:
        if record.path not in self.counts:
            raise MissingCountError(f"no sidecar count for {record.path!r}")
        return self.counts[record.path]


class GraphSegmenterCounts:
    """Region counts computed on demand by the built-in segmenter."""

    kind = "graph_segmenter"

    def __init__(self, k: float = DEFAULT_K, min_size: int = DEFAULT_MIN_SIZE,
                 sigma: float = DEFAULT_SIGMA, max_side: int = DEFAULT_MAX_SIDE):
        self.k = k
        self.min_size = min_size
        self.sigma = sigma
        self.max_side = max_side

    def count(self, record: ImageRecord, root=None) -> int:
        path = Path(root) / record.path if root is not None else Path(record.path)
        return count_regions_graph(
            decode_image(path), k=self.k, min_size=self.min_size,
            sigma=self.sigma, max_side=self.max_side,
        )


class RecordedCounts:
    """Counts already present on the records (a prior regions pass)."""

    kind = "recorded"

    def count(self, record: ImageRecord, root=None) -> int:
        if record.region_count is None:
            raise MissingCountError(f"record {record.path!r} has no region_count")
        return record.region_count


def annotate_region_counts(records, provider, root=None) -> list:
    """Return records with region_count filled in for every kept record.

    Dropped records pass through untouched; a missing count for a kept
    record is an error, not a zero.
    """
    out = []
    for rec in records:
        if not rec.kept:
            out.append(rec)
            continue
        out.append(dataclasses.replace(rec, region_count=int(provider.count(rec, root=root))))
    return out


def filter_by_regions(records, provider, theta: int, root=None) -> list:
    """Drop kept records whose region count is below theta (inclusive keep).

    Returns a new record list; kept records get region_count populated,
    and those with count < theta are marked dropped with reason
    below_region_threshold.
    """
    out = []
    for rec in records:
        if not rec.kept:
            out.append(rec)
            continue
        count = int(provider.count(rec, root=root))
        if count < theta:
            out.append(
                dataclasses.replace(
                    rec, region_count=count, kept=False,
                    drop_reason=DropReason.BELOW_REGION_THRESHOLD.value,
                )
            )
        else:
            out.append(dataclasses.replace(rec, region_count=count))
    return out


def filter_by_blockiness(records, theta_prime: float) -> list:
    """Drop kept records whose blockiness exceeds theta_prime (inclusive keep).

    theta_prime = +inf keeps everything; a kept record without a
    blockiness value is an error.
    """
    if theta_prime is None or math.isinf(theta_prime):
        return list(records)
    out = []
    for rec in records:
        if not rec.kept:
            out.append(rec)
            continue
        if rec.blockiness is None:
            raise MissingFieldError(f"record {rec.path!r} has no blockiness value")
        if rec.blockiness > theta_prime:
            out.append(
                dataclasses.replace(
                    rec, kept=False,
                    drop_reason=DropReason.ABOVE_BLOCKINESS_THRESHOLD.value,
                )
            )
        else:
            out.append(rec)
    return out
