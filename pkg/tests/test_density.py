"""Kernel density estimation, shared grids, and KL divergence."""

import math

import numpy as np
import pytest

import oracles
from curate.density import (
    DEFAULT_GRID_SIZE,
    MIN_GRID_SIZE,
    PMF_FLOOR,
    Density,
    evaluate_kde,
    kde,
    kl_divergence,
    make_grid,
    scott_bandwidth,
    shared_grid,
)
from curate.errors import DegenerateSamplesError, GridMismatchError


def _random_pmf(rng, grid):
    raw = rng.uniform(0.0, 1.0, grid.size)
    pmf = np.maximum(raw / raw.sum(), PMF_FLOOR)
    pmf /= pmf.sum()
    return Density(grid=grid, pmf=pmf, bandwidth=1.0, sample_count=2)


def test_scott_rule_round_number_case():
    # 32 samples whose sample standard deviation is 2 give h = 2/32^(1/5) = 1.
    a = 2.0 * math.sqrt(31.0 / 32.0)
    samples = [-a] * 16 + [a] * 16
    assert abs(scott_bandwidth(samples) - 1.0) < 1e-12


def test_scott_rejects_degenerate_samples():
    with pytest.raises(DegenerateSamplesError):
        scott_bandwidth([0.0, 0.0, 0.0])
    with pytest.raises(DegenerateSamplesError):
        scott_bandwidth([5.0])


def test_scott_matches_formula_reference():
    rng = np.random.default_rng(19)
    samples = rng.lognormal(1.0, 0.7, 1000)
    assert abs(scott_bandwidth(samples) - oracles.scott_bandwidth_reference(samples)) < 1e-12


def test_make_grid_span_formula():
    grid = make_grid([1.0, 2.0, 3.0], grid_size=16, bandwidth_a=0.5)
    assert grid.size == 16
    assert grid[0] == 0.0
    assert abs(grid[-1] - 4.65) < 1e-12


def test_make_grid_deterministic_and_uniform():
    samples = [0.5, 4.0, 9.5, 2.25]
    g1 = make_grid(samples, grid_size=64)
    g2 = make_grid(samples, grid_size=64)
    assert np.array_equal(g1, g2)
    steps = np.diff(g1)
    assert steps.max() - steps.min() < 1e-12


def test_make_grid_input_validation():
    with pytest.raises(DegenerateSamplesError):
        make_grid([], [])
    with pytest.raises(ValueError):
        make_grid([1.0, 2.0], grid_size=MIN_GRID_SIZE - 1)


def test_shared_grid_covers_every_sample_set():
    sets = [np.array([1.0, 2.0, 5.0]), np.array([0.5, 9.0, 3.0])]
    grid = shared_grid(sets, grid_size=32)
    assert grid[0] == 0.0
    assert grid[-1] >= 1.05 * 9.0


def test_kde_mode_sits_at_sample_cluster():
    samples = 5.0 + np.linspace(-0.05, 0.05, 64)
    grid = make_grid(samples, grid_size=DEFAULT_GRID_SIZE)
    density = kde(samples, grid)
    assert abs(grid[np.argmax(density.pmf)] - 5.0) < 0.02


def test_kde_matches_bruteforce_gaussian_sum():
    samples = np.array([1.0, 2.0, 3.0])
    grid = make_grid(samples, grid_size=64)
    h = scott_bandwidth(samples)
    got = evaluate_kde(samples, grid, h)
    want = oracles.kde_reference(samples, grid, h)
    assert np.max(np.abs(got - want)) < 1e-12

    rng = np.random.default_rng(29)
    samples = rng.gamma(4.0, 2.0, 50)
    grid = make_grid(samples, grid_size=128)
    h = scott_bandwidth(samples)
    assert np.max(np.abs(evaluate_kde(samples, grid, h)
                         - oracles.kde_reference(samples, grid, h))) < 1e-12


def test_kde_pmf_is_normalized_and_floored():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        samples = rng.lognormal(0.5, 0.8, 40)
        density = kde(samples, make_grid(samples, grid_size=256))
        assert abs(density.pmf.sum() - 1.0) < 1e-9
        # Flooring happens before renormalization, which can scale the
        # floor down by the total mass; the mass stays near 1.
        assert density.pmf.min() >= PMF_FLOOR * 0.5
        assert density.sample_count == 40


def test_kde_discretization_matches_reference_pmf():
    rng = np.random.default_rng(37)
    samples = rng.gamma(3.0, 1.5, 30)
    grid = make_grid(samples, grid_size=128)
    density = kde(samples, grid)
    want = oracles.pmf_reference(samples, grid, scott_bandwidth(samples))
    assert np.max(np.abs(density.pmf - want)) < 1e-12


def test_kl_of_identical_density_is_zero():
    rng = np.random.default_rng(41)
    p = _random_pmf(rng, np.linspace(0, 10, 64))
    assert abs(kl_divergence(p, p)) <= 1e-12


def test_kl_two_point_hand_example():
    grid = np.array([0.0, 1.0])
    p = Density(grid=grid, pmf=np.array([0.5, 0.5]), bandwidth=1.0, sample_count=2)
    q = Density(grid=grid, pmf=np.array([0.25, 0.75]), bandwidth=1.0, sample_count=2)
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    got = kl_divergence(p, q)
    assert abs(got - expected) < 1e-12
    assert abs(got - 0.1438410362) < 1e-6


def test_kl_nonnegative_on_random_pmfs():
    grid = np.linspace(0, 4, 48)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = _random_pmf(rng, grid)
        q = _random_pmf(np.random.default_rng(seed + 1000), grid)
        assert kl_divergence(p, q) >= -1e-12


def test_kl_is_asymmetric_on_skewed_pair():
    grid = np.linspace(0, 1, 16)
    skew = np.maximum(np.geomspace(1.0, 1e-6, 16), PMF_FLOOR)
    p = Density(grid=grid, pmf=skew / skew.sum(), bandwidth=1.0, sample_count=2)
    flat = np.full(16, 1.0 / 16.0)
    q = Density(grid=grid, pmf=flat, bandwidth=1.0, sample_count=2)
    assert abs(kl_divergence(p, q) - kl_divergence(q, p)) > 1e-6


def test_kl_requires_shared_grid():
    p = _random_pmf(np.random.default_rng(1), np.linspace(0, 5, 32))
    q = _random_pmf(np.random.default_rng(2), np.linspace(0, 6, 32))
    with pytest.raises(GridMismatchError):
        kl_divergence(p, q)
    r = _random_pmf(np.random.default_rng(3), np.linspace(0, 5, 64))
    with pytest.raises(GridMismatchError):
        kl_divergence(p, r)


def test_kl_stable_under_grid_refinement(ref96_samples):
    # Doubling the grid from 512 to 1024 points moves the KL between the
    # clean and heavily recompressed sample sets by less than 5%.
    a = ref96_samples[1.0]
    b = ref96_samples[0.5]
    values = {}
    for grid_size in (512, 1024):
        grid = shared_grid([a, b], grid_size=grid_size)
        values[grid_size] = kl_divergence(kde(a, grid), kde(b, grid))
    assert abs(values[512] - values[1024]) / values[1024] < 0.05


def test_density_shape_validation():
    with pytest.raises(ValueError):
        Density(grid=np.zeros((4, 4)), pmf=np.zeros((4, 4)), bandwidth=1.0, sample_count=2)
    with pytest.raises(ValueError):
        Density(grid=np.zeros(8), pmf=np.zeros(9), bandwidth=1.0, sample_count=2)
