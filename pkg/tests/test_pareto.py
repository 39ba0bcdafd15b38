import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robopt.gp import PosteriorGaussian
from robopt.pareto import (
    ParetoFront,
    dominates,
    ehi_batch,
    expected_hv_improvement,
    expected_improvement,
    hv_improvement,
    hypervolume_2d,
    pareto_extract,
)

REF = np.zeros(2)


def brute_force_front(ys):
    """Quadratic-time reference: keep points not strictly dominated."""
    ys = np.asarray(ys, dtype=float)
    keep = []
    for i, y in enumerate(ys):
        dominated = False
        for j, other in enumerate(ys):
            if np.all(other >= y) and np.any(other > y):
                dominated = True
                break
            # exact duplicates: keep only the first occurrence
            if j < i and np.all(other == y):
                dominated = True
                break
        if not dominated:
            keep.append(y)
    return sorted(map(tuple, keep))


def mc_hypervolume(front, ref, n_samples, rng):
    """Monte-Carlo staircase area over the unit box; returns (mean, stderr)."""
    pts = front.points
    samples = rng.uniform(ref, 1.0, size=(n_samples, 2))
    if len(pts) == 0:
        return 0.0, 0.0
    idx = np.searchsorted(pts[:, 0], samples[:, 0], side="left")
    heights = np.concatenate([pts[:, 1], [ref[1]]])[idx]
    inside = samples[:, 1] <= heights
    box = np.prod(1.0 - ref)
    p = inside.mean()
    return p * box, box * np.sqrt(p * (1 - p) / n_samples)


def staircase_improvement_batch(draws, front, ref):
    """Exact hypervolume improvement per draw via vertical-strip sums.

    Independent of the production cell-grid decomposition: strips run between
    consecutive front x-coordinates, each with its own staircase height.
    """
    pts = front.points
    n = len(pts)
    xs = np.concatenate([[ref[0]], pts[:, 0], [np.inf]])
    heights = np.concatenate([pts[:, 1], [ref[1]]])  # height right of xs[j]
    y1 = draws[:, 0][:, None]
    y2 = draws[:, 1][:, None]
    widths = np.clip(np.minimum(y1, xs[None, 1:]) - xs[None, :-1], 0.0, None)
    lift = np.clip(y2 - np.maximum(heights[None, :], ref[1]), 0.0, None)
    return np.sum(widths * lift, axis=1)


class TestDominates:
    def test_clear_dominance(self):
        assert dominates((0.9, 0.9), (0.1, 0.1))

    def test_incomparable(self):
        assert not dominates((0.9, 0.1), (0.1, 0.9))
        assert not dominates((0.1, 0.9), (0.9, 0.1))

    def test_weak_reflexive(self):
        assert dominates((0.5, 0.5), (0.5, 0.5))

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=2),
           st.lists(st.floats(-1, 1), min_size=2, max_size=2))
    def test_antisymmetry_up_to_equality(self, a, b):
        if dominates(a, b) and dominates(b, a):
            assert np.allclose(a, b)


class TestParetoExtract:
    def test_empty(self):
        assert len(pareto_extract([])) == 0

    def test_singleton(self):
        front = pareto_extract([(0.3, 0.4)])
        assert np.allclose(front.points, [[0.3, 0.4]])

    def test_spec_example(self):
        front = pareto_extract([(1, 0), (0, 1), (0.5, 0.5), (0.2, 0.2)])
        assert sorted(map(tuple, front.points)) == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]

    def test_duplicates_collapse(self):
        front = pareto_extract([(0.5, 0.5), (0.5, 0.5)])
        assert len(front) == 1

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=12))
    @settings(max_examples=200)
    def test_matches_brute_force(self, ys):
        front = pareto_extract(ys)
        assert sorted(map(tuple, front.points)) == brute_force_front(ys)

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=12))
    def test_idempotent(self, ys):
        once = pareto_extract(ys)
        twice = pareto_extract(once.points)
        assert np.array_equal(once.points, twice.points)

    def test_sorted_antichain_invariant(self):
        rng = np.random.default_rng(7)
        front = pareto_extract(rng.uniform(size=(50, 2)))
        assert np.all(np.diff(front.points[:, 0]) > 0)
        assert np.all(np.diff(front.points[:, 1]) < 0)


class TestHypervolume:
    def test_single_box(self):
        assert hypervolume_2d(ParetoFront(np.array([[1.0, 1.0]])), REF) == 1.0

    def test_two_boxes_inclusion_exclusion(self):
        front = pareto_extract([(1, 2), (2, 1)])
        assert hypervolume_2d(front, REF) == pytest.approx(3.0)

    def test_empty_front(self):
        assert hypervolume_2d(ParetoFront(), REF) == 0.0

    def test_reference_violation_raises(self):
        front = ParetoFront(np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError):
            hypervolume_2d(front, (0.6, 0.0))

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            front = pareto_extract(rng.uniform(size=(8, 2)))
            exact = hypervolume_2d(front, REF)
            est, se = mc_hypervolume(front, REF, 200_000, rng)
            assert abs(exact - est) <= max(3 * se, 1e-12)

    def test_monotone_in_points(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            ys = rng.uniform(size=(6, 2))
            front = pareto_extract(ys[:-1])
            grown = pareto_extract(ys)
            assert hypervolume_2d(grown, REF) >= hypervolume_2d(front, REF) - 1e-15

    def test_translation_invariance(self):
        rng = np.random.default_rng(11)
        ys = rng.uniform(size=(6, 2))
        shift = np.array([0.37, -0.12])
        a = hypervolume_2d(pareto_extract(ys), REF)
        b = hypervolume_2d(pareto_extract(ys + shift), REF + shift)
        assert a == pytest.approx(b, abs=1e-12)


class TestHvImprovement:
    def test_dominated_point_zero(self):
        front = pareto_extract([(0.8, 0.8)])
        assert hv_improvement((0.5, 0.5), front, REF) == 0.0

    def test_empty_front(self):
        assert hv_improvement((0.5, 0.5), ParetoFront(), REF) == pytest.approx(0.25)

    def test_definitional_difference(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            front = pareto_extract(rng.uniform(size=(5, 2)))
            y = rng.uniform(size=2)
            merged = pareto_extract(np.vstack([front.points, y]))
            expect = hypervolume_2d(merged, REF) - hypervolume_2d(front, REF)
            assert hv_improvement(y, front, REF) == pytest.approx(expect, abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(9)
        front_pts = rng.uniform(0.2, 0.8, size=(4, 2))
        y = rng.uniform(0.2, 0.8, size=2)
        shift = np.array([0.1, 0.05])
        a = hv_improvement(y, pareto_extract(front_pts), REF)
        b = hv_improvement(y + shift, pareto_extract(front_pts + shift), REF + shift)
        assert a == pytest.approx(b, abs=1e-12)

    def test_matches_strip_batch_helper(self):
        rng = np.random.default_rng(21)
        front = pareto_extract(rng.uniform(size=(6, 2)))
        draws = rng.uniform(size=(40, 2))
        batch = staircase_improvement_batch(draws, front, REF)
        for y, got in zip(draws, batch):
            assert hv_improvement(y, front, REF) == pytest.approx(got, abs=1e-12)


class TestExpectedHvImprovement:
    def test_point_mass_limit(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            front = pareto_extract(rng.uniform(size=(4, 2)))
            mean = rng.uniform(size=2)
            val = ehi_batch(mean[None, :], np.full((1, 2), 1e-13), front, REF)[0]
            assert val == pytest.approx(hv_improvement(mean, front, REF), abs=1e-6)

    def test_deep_dominated_mean_negligible(self):
        front = pareto_extract([(0.9, 0.9)])
        sigma = 0.01
        post = PosteriorGaussian(np.array([0.5, 0.5]), np.eye(2) * sigma**2)
        assert expected_hv_improvement(post, front, REF) <= 1e-6

    def test_empty_front_factorizes(self):
        # With no front the integral factorizes into two EI terms against the
        # reference coordinates.
        mean, std = np.array([0.4, 0.6]), np.array([0.2, 0.3])
        val = ehi_batch(mean[None, :], (std**2)[None, :], ParetoFront(), REF)[0]
        expect = expected_improvement(mean[0], std[0], REF[0]) * expected_improvement(
            mean[1], std[1], REF[1]
        )
        assert val == pytest.approx(expect, rel=1e-12)

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(29)
        for _ in range(15):
            front = pareto_extract(rng.uniform(size=(5, 2)))
            mean = rng.uniform(-0.1, 1.1, size=2)
            std = rng.uniform(0.02, 0.4, size=2)
            exact = ehi_batch(mean[None, :], (std**2)[None, :], front, REF)[0]
            draws = rng.normal(mean, std, size=(100_000, 2))
            vals = staircase_improvement_batch(draws, front, REF)
            est, se = vals.mean(), vals.std(ddof=1) / np.sqrt(len(vals))
            assert abs(exact - est) <= max(3 * se, 1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(31)
        fronts = [pareto_extract(rng.uniform(size=(k, 2))) for k in (1, 3, 7)]
        means = rng.uniform(-0.5, 1.5, size=(64, 2))
        variances = rng.uniform(0, 0.25, size=(64, 2))
        for front in fronts:
            assert np.all(ehi_batch(means, variances, front, REF) >= 0)

    def test_posterior_wrapper_uses_diagonal(self):
        front = pareto_extract([(0.5, 0.5)])
        cov = np.array([[0.04, 0.03], [0.03, 0.09]])
        post = PosteriorGaussian(np.array([0.6, 0.6]), cov)
        direct = ehi_batch(np.array([[0.6, 0.6]]), np.array([[0.04, 0.09]]), front, REF)[0]
        assert expected_hv_improvement(post, front, REF) == pytest.approx(direct)


class TestExpectedImprovement:
    def test_zero_std_positive_gap(self):
        assert expected_improvement(0.7, 0.0, 0.5) == pytest.approx(0.2)

    def test_zero_std_negative_gap(self):
        assert expected_improvement(0.3, 0.0, 0.5) == 0.0

    def test_at_the_mean(self):
        # E[max(X - best, 0)] with X ~ N(best, 1) is phi(0) ~= 0.3989
        rng = np.random.default_rng(41)
        draws = np.maximum(rng.normal(0.5, 1.0, size=500_000) - 0.5, 0.0)
        est, se = draws.mean(), draws.std(ddof=1) / np.sqrt(len(draws))
        assert abs(expected_improvement(0.5, 1.0, 0.5) - est) <= 3 * se
        assert expected_improvement(0.5, 1.0, 0.5) == pytest.approx(0.3989422804, abs=1e-9)

    def test_vectorized(self):
        means = np.array([0.1, 0.5, 0.9])
        vals = expected_improvement(means, 0.1, 0.5)
        assert vals.shape == (3,)
        assert np.all(np.diff(vals) > 0)
