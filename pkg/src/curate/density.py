"""Gaussian kernel density estimation and KL divergence over a shared grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSamplesError, GridMismatchError

DEFAULT_GRID_SIZE = 1024
MIN_GRID_SIZE = 16

# Floor applied to the discretized pmf before renormalization; keeps KL
# finite when two supports barely overlap.
PMF_FLOOR = 1e-12

GRID_PAD_FACTOR = 1.05
GRID_PAD_BANDWIDTHS = 3.0


@dataclass(frozen=True)
class Density:
    """Discretized probability mass function over a blockiness grid."""

    grid: np.ndarray
    pmf: np.ndarray
    bandwidth: float
    sample_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        object.__setattr__(self, "pmf", np.asarray(self.pmf, dtype=np.float64))
        if self.grid.shape != self.pmf.shape or self.grid.ndim != 1:
            raise ValueError("grid and pmf must be 1-D arrays of equal length")


def scott_bandwidth(samples) -> float:
    """Scott's rule: h = sigma_hat * n^(-1/5), sample standard deviation.

    Raises DegenerateSamplesError when n < 2 or all samples coincide.
    """
    arr = np.asarray(samples, dtype=np.float64)
    n = arr.size
    if n < 2:
        raise DegenerateSamplesError(f"need at least 2 samples, got {n}")
    sigma = float(arr.std(ddof=1))
    if sigma == 0.0:
        raise DegenerateSamplesError("samples have zero variance")
    return sigma * n ** (-0.2)


def make_grid(samples_a, samples_b=(), grid_size: int = DEFAULT_GRID_SIZE,
              bandwidth_a: float | None = None, bandwidth_b: float | None = None) -> np.ndarray:
    """Evaluation grid shared by the densities of two sample sets.

    grid_size equally spaced points over [0, 1.05 * max(all samples)
    + 3 * max(bandwidth)]; the lower bound is clamped to 0 because
    blockiness is nonnegative.  Bandwidths default to Scott's rule per
    nonempty sample set.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 and b.size == 0:
        raise DegenerateSamplesError("cannot build a grid from empty samples")
    if grid_size < MIN_GRID_SIZE:
        raise ValueError(f"grid_size must be at least {MIN_GRID_SIZE}, got {grid_size}")
    bandwidths = []
    for arr, bw in ((a, bandwidth_a), (b, bandwidth_b)):
        if arr.size == 0:
            continue
        bandwidths.append(bw if bw is not None else scott_bandwidth(arr))
    top = GRID_PAD_FACTOR * float(max(a.max(initial=-np.inf), b.max(initial=-np.inf)))
    top += GRID_PAD_BANDWIDTHS * max(bandwidths)
    return np.linspace(0.0, top, grid_size)


def shared_grid(sample_sets, grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Grid covering every sample set, padded by the widest bandwidth."""
    sets = [np.asarray(s, dtype=np.float64) for s in sample_sets]
    if not sets or all(s.size == 0 for s in sets):
        raise DegenerateSamplesError("cannot build a grid from empty samples")
    top = GRID_PAD_FACTOR * max(float(s.max()) for s in sets if s.size)
    top += GRID_PAD_BANDWIDTHS * max(scott_bandwidth(s) for s in sets if s.size)
    if grid_size < MIN_GRID_SIZE:
        raise ValueError(f"grid_size must be at least {MIN_GRID_SIZE}, got {grid_size}")
    return np.linspace(0.0, top, grid_size)


def evaluate_kde(samples, grid: np.ndarray, bandwidth: float) -> np.ndarray:
    """Continuous KDE values on the grid: mean Gaussian bump, scaled by 1/h.

    Chunked over samples to bound memory; summation order is fixed, so
    results are bit-stable across runs.
    """
    arr = np.asarray(samples, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    norm = 1.0 / (bandwidth * arr.size * math.sqrt(2.0 * math.pi))
    total = np.zeros_like(grid)
    chunk = 4096
    for start in range(0, arr.size, chunk):
        part = arr[start : start + chunk]
        z = (grid[None, :] - part[:, None]) / bandwidth
        total += np.exp(-0.5 * z * z).sum(axis=0)
    return norm * total


def kde(samples, grid: np.ndarray, bandwidth: float | None = None) -> Density:
    """Fit a Gaussian KDE and discretize it onto the grid.

    The continuous density is sampled at the grid points, multiplied by
    the grid spacing, floored at PMF_FLOOR, and renormalized to sum 1.
    """
    arr = np.asarray(samples, dtype=np.float64)
    h = bandwidth if bandwidth is not None else scott_bandwidth(arr)
    grid = np.asarray(grid, dtype=np.float64)
    values = evaluate_kde(arr, grid, h)
    step = float(grid[1] - grid[0])
    pmf = np.maximum(values * step, PMF_FLOOR)
    pmf /= pmf.sum()
    return Density(grid=grid, pmf=pmf, bandwidth=h, sample_count=int(arr.size))


def kl_divergence(p: Density, q: Density) -> float:
    """KL(p || q) = sum p * ln(p / q) in nats; requires one shared grid."""
    if p.grid.shape != q.grid.shape or not np.array_equal(p.grid, q.grid):
        raise GridMismatchError("densities are defined on different grids")
    return float(np.sum(p.pmf * np.log(p.pmf / q.pmf)))
