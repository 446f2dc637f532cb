"""Concentrated mixing-weight objective and its simplex optimizer."""

import numpy as np
import pytest

from pairmix import (
    DegenerateNormalizerError,
    mixing_gradient,
    mixing_objective,
    optimize_mixing,
    optimize_mixing_info,
)

from oracles import grid_argmax_two_class, mixing_objective_reference


def _random_counts(rng, m):
    """Counts resembling responsibility masses: positive, varied magnitude."""
    return rng.uniform(0.5, 50.0, size=m)


def test_objective_matches_reference():
    rng = np.random.default_rng(310)
    for _ in range(200):
        m = int(rng.integers(2, 6))
        counts = _random_counts(rng, m)
        alpha = rng.dirichlet(np.ones(m))
        n_cannot = int(rng.integers(0, 5))
        got = mixing_objective(alpha, counts, n_cannot)
        want = mixing_objective_reference(alpha, counts, n_cannot)
        assert abs(got - want) < 1e-10


def test_objective_zero_count_zero_weight_convention():
    # 0 * log 0 contributes nothing
    value = mixing_objective([0.0, 1.0], [0.0, 3.0], 0)
    assert abs(value - 0.0) < 1e-15
    # positive count at zero weight is -inf
    assert mixing_objective([0.0, 1.0], [2.0, 3.0], 0) == -np.inf


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(311)
    h = 1e-6
    for _ in range(100):
        m = int(rng.integers(2, 6))
        counts = _random_counts(rng, m)
        n_cannot = int(rng.integers(0, 4))
        # interior point, away from the boundary so central differences behave
        alpha = rng.dirichlet(np.ones(m) * 5.0)
        alpha = 0.9 * alpha + 0.1 / m
        grad = mixing_gradient(alpha, counts, n_cannot)
        for k in range(m):
            e = np.zeros(m)
            e[k] = h
            num = (
                mixing_objective(alpha + e, counts, n_cannot)
                - mixing_objective(alpha - e, counts, n_cannot)
            ) / (2 * h)
            denom = max(1.0, abs(num))
            assert abs(grad[k] - num) / denom < 1e-5


def test_closed_form_without_cannot_links():
    rng = np.random.default_rng(312)
    for _ in range(50):
        m = int(rng.integers(2, 7))
        counts = _random_counts(rng, m)
        alpha, info = optimize_mixing_info(counts, 0)
        np.testing.assert_allclose(alpha, counts / counts.sum(), atol=1e-15)
        assert info.n_steps == 0


def test_optimizer_matches_grid_oracle_two_classes():
    rng = np.random.default_rng(313)
    for _ in range(25):
        counts = _random_counts(rng, 2)
        n_cannot = int(rng.integers(1, 6))
        alpha, info = optimize_mixing_info(counts, n_cannot)
        grid_alpha, grid_val = grid_argmax_two_class(counts, n_cannot)
        # either the weights agree or ours scores at least as well
        ours = mixing_objective(alpha, counts, n_cannot)
        assert np.max(np.abs(alpha - grid_alpha)) < 1e-4 or ours >= grid_val - 1e-9


def test_optimizer_kkt_convergence_rate():
    rng = np.random.default_rng(314)
    total, fast = 0, 0
    for _ in range(200):
        m = int(rng.integers(2, 7))
        counts = _random_counts(rng, m)
        n_cannot = int(rng.integers(1, 8))
        alpha, info = optimize_mixing_info(counts, n_cannot)
        total += 1
        if info.railed:
            continue  # boundary-divergent instances have no interior optimum
        if info.kkt_residual <= 1e-8 and info.n_steps <= 20:
            fast += 1
    assert fast / total >= 0.95


def test_boundary_divergent_instance_rails_to_vertex():
    # counts (4, 1) with two cannot-links: the objective increases toward
    # alpha -> (1, 0), so the optimizer must stop at the clipped boundary
    # rather than error out.
    counts = np.array([4.0, 1.0])
    alpha, info = optimize_mixing_info(counts, 2)
    grid_alpha, _ = grid_argmax_two_class(counts, 2)
    assert info.railed
    assert abs(alpha[0] - grid_alpha[0]) < 1e-4
    assert alpha[0] > 0.999


def test_zero_count_classes_stay_at_zero():
    counts = np.array([5.0, 0.0, 3.0])
    alpha, info = optimize_mixing_info(counts, 2)
    assert alpha[1] == 0.0
    assert abs(alpha.sum() - 1.0) < 1e-12


def test_single_supported_class_with_cannot_links_degenerate():
    with pytest.raises(DegenerateNormalizerError):
        optimize_mixing(np.array([3.0, 0.0]), 1)


def test_optimizer_never_leaves_simplex():
    rng = np.random.default_rng(315)
    for _ in range(100):
        m = int(rng.integers(2, 6))
        counts = rng.uniform(0.0, 20.0, size=m)
        if np.count_nonzero(counts) < 2:
            counts[:2] = [1.0, 1.0]
        n_cannot = int(rng.integers(0, 6))
        alpha = optimize_mixing(counts, n_cannot)
        assert np.all(alpha >= 0.0)
        assert abs(alpha.sum() - 1.0) < 1e-9


def test_optimizer_improves_on_linear_start():
    rng = np.random.default_rng(316)
    for _ in range(100):
        m = int(rng.integers(2, 6))
        counts = _random_counts(rng, m)
        n_cannot = int(rng.integers(1, 6))
        start = counts / counts.sum()
        alpha = optimize_mixing(counts, n_cannot)
        assert (
            mixing_objective(alpha, counts, n_cannot)
            >= mixing_objective(start, counts, n_cannot) - 1e-10
        )


def test_optimizer_deterministic():
    counts = np.array([7.0, 2.5, 4.0])
    a1, i1 = optimize_mixing_info(counts, 3)
    a2, i2 = optimize_mixing_info(counts, 3)
    np.testing.assert_array_equal(a1, a2)
    assert i1.n_steps == i2.n_steps
