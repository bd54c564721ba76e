import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wae_lab.errors import DegenerateFitError
from wae_lab.geometry import (
    covering_number, covering_number_tau, covering_report, holder_norm_estimate, quasi_isometry_check,
    wasserstein_dim_upper,
)
from wae_lab.measures import DiscreteMeasure, Uniform, benchmark_bumps, sample, unit_cube
from wae_lab.rng import make_rng

small_sets = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=12)


def exact_cover_1d(x, eps):
    """Fewest closed intervals of length eps covering x, by exhaustive search.

    Some optimal cover uses intervals whose left ends are data points, so
    trying every subset of those candidate intervals is exhaustive.
    """
    x = np.asarray(x, dtype=float)
    starts = np.unique(x)
    covers = [(x >= s) & (x <= s + eps) for s in starts]
    for k in range(1, len(starts) + 1):
        for combo in itertools.combinations(range(len(starts)), k):
            if np.logical_or.reduce([covers[i] for i in combo]).all():
                return k
    raise AssertionError("unreachable")


def exact_tau_cover_1d(x, w, eps, tau):
    """Smallest exact cover over all discard sets of mass at most tau."""
    best = exact_cover_1d(x, eps)
    n = len(x)
    for k in range(1, n):
        for drop in itertools.combinations(range(n), k):
            if w[list(drop)].sum() <= tau + 1e-12:
                keep = np.setdiff1d(np.arange(n), drop)
                best = min(best, exact_cover_1d(x[keep], eps))
    return best


class TestCoveringNumber:
    def test_equispaced(self):
        pts = np.linspace(0, 1, 100)[:, None]
        assert covering_number(pts, 0.5) in (2, 3)
        assert exact_cover_1d(pts[:, 0], 0.5) == 2

    def test_single_point(self):
        for eps in (1e-3, 0.5, 10.0):
            assert covering_number(np.array([[0.3, 0.2]]), eps) == 1

    def test_far_pair(self):
        assert covering_number(np.array([[0.0], [10.0]]), 1.0) == 2

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            covering_number(np.zeros((0, 1)), 1.0)
        with pytest.raises(ValueError):
            covering_number(np.zeros((1, 1)), 0.0)

    @given(small_sets, st.floats(0.2, 5.0))
    def test_within_factor_two_of_exact(self, xs, eps):
        exact = exact_cover_1d(xs, eps)
        got = covering_number(np.array(xs)[:, None], eps)
        assert exact <= got <= 2 * exact

    @given(st.integers(0, 2**31), st.floats(0.05, 0.5), st.floats(1.01, 3.0))
    def test_report_monotone(self, seed, eps, factor):
        m = sample(unit_cube(2), 200, seed)
        rep = covering_report(m, [eps * factor, eps])
        assert rep.counts[0] <= rep.counts[1]
        assert rep.counts.min() >= 1

    def test_report_csv(self):
        m = sample(unit_cube(2), 100, 0)
        rep = covering_report(m, [0.5, 0.25, 0.1], tau=0.05)
        lines = rep.to_csv().splitlines()
        assert lines[0] == "epsilon,count,tau"
        assert len(lines) == 4


class TestCoveringTau:
    def test_tau_zero_is_full_cover(self):
        m = sample(unit_cube(2), 300, 1)
        for eps in (0.1, 0.3):
            assert covering_number_tau(m, eps, 0.0) == covering_number(m.points, eps)

    def test_outlier_dropped(self):
        rng = make_rng(2)
        pts = np.concatenate([rng.uniform(0, 0.4, 99), [10.0]])
        m = DiscreteMeasure.uniform(pts[:, None])
        got = covering_number_tau(m, 0.5, 0.02)
        assert got == 1
        # exhaustive over discard sets of up to two atoms (mass 0.02)
        best = exact_cover_1d(pts, 0.5)
        for drop in itertools.combinations(range(100), 2):
            if 99 in drop:
                best = min(best, exact_cover_1d(np.delete(pts, drop), 0.5))
        assert got == best

    def test_tau_near_one(self):
        m = sample(unit_cube(3), 200, 3)
        assert covering_number_tau(m, 0.05, 0.999) == 1

    def test_tau_range(self):
        m = sample(unit_cube(1), 10, 0)
        with pytest.raises(ValueError):
            covering_number_tau(m, 0.1, 1.0)

    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=7), st.floats(0.3, 3.0),
           st.floats(0.0, 0.6))
    def test_bounds(self, xs, eps, tau):
        x = np.array(xs)
        m = DiscreteMeasure.uniform(x[:, None])
        got = covering_number_tau(m, eps, tau)
        assert got <= covering_number(x[:, None], eps)
        assert got >= exact_tau_cover_1d(x, m.weights, eps, tau)


class TestDimension:
    def test_four_cube(self):
        est = wasserstein_dim_upper(sample(unit_cube(4), 4096, 0))
        assert 3.5 <= est.s_hat <= 4.5
        assert est.predicted_rate == pytest.approx(-1 / est.s_hat)

    def test_line_clamps(self):
        est = wasserstein_dim_upper(sample(unit_cube(1), 4096, 1))
        assert est.clamped
        assert est.s_hat == pytest.approx(2.1)

    def test_increases_with_dimension(self):
        s = [wasserstein_dim_upper(sample(unit_cube(d), 4096, d)).s_hat for d in (2, 3, 4)]
        assert s[0] < s[1] < s[2]

    def test_point_mass_degenerate(self):
        with pytest.raises(DegenerateFitError):
            wasserstein_dim_upper(DiscreteMeasure.uniform(np.full((500, 2), 0.3)))

    def test_short_grid(self):
        with pytest.raises(DegenerateFitError):
            wasserstein_dim_upper(sample(unit_cube(2), 500, 0), [0.5, 0.4, 0.3])

    def test_fit_residual_exposed(self):
        est = wasserstein_dim_upper(sample(unit_cube(3), 4096, 5))
        assert est.fit.rss >= 0
        assert np.all(np.isfinite(est.fit.residuals))


class TestQuasiIsometry:
    def test_identity(self):
        assert quasi_isometry_check(lambda x: x, ((0.0, 1.0),), 1.0).passed

    def test_tripling_fails_upper(self):
        res = quasi_isometry_check(lambda x: 3 * x, ((0.0, 1.0),), 2.0)
        assert not res.passed
        assert res.kind == "upper"
        assert res.worst_ratio == pytest.approx(3.0)

    def test_square_fails_lower_near_zero(self):
        t = np.geomspace(1e-12, 1e-8, 50)
        for A in (10.0, 1e3, 1e6):
            res = quasi_isometry_check(lambda x: x ** 2, None, A, pairs=(t, 2 * t))
            assert not res.passed and res.kind == "lower"

    @given(st.floats(1.0, 5.0), st.floats(0.0, 3.0), st.integers(0, 1000))
    def test_monotone_in_A(self, A, extra, seed):
        def fn(x):
            return np.sin(3 * x) + 2 * x

        small = quasi_isometry_check(fn, ((0.0, 2.0),), A, n_pairs=200, seed=seed)
        big = quasi_isometry_check(fn, ((0.0, 2.0),), A + extra, n_pairs=200, seed=seed)
        assert (not small.passed) or big.passed
        assert small.A_hat == big.A_hat

    def test_A_hat_passes(self):
        def fn(x):
            return np.sin(3 * x) + 2 * x

        res = quasi_isometry_check(fn, ((0.0, 2.0),), 1.0, n_pairs=500, seed=4)
        again = quasi_isometry_check(fn, ((0.0, 2.0),), res.A_hat * (1 + 1e-9), n_pairs=500, seed=4)
        assert again.passed

    def test_requires_A_at_least_one(self):
        with pytest.raises(ValueError):
            quasi_isometry_check(lambda x: x, ((0.0, 1.0),), 0.5)


class TestHolder:
    def test_uniform_density(self):
        est = holder_norm_estimate(Uniform(((0.0, 1.0),)), 1.0)
        assert est.value == pytest.approx(1.0, abs=1e-12)
        assert est.seminorm == pytest.approx(0.0, abs=1e-12)

    def test_absolute_value(self):
        est = holder_norm_estimate(np.abs, 0.5, grid=2001, domain=(-1.0, 1.0))
        assert est.seminorm >= 1.0
        # oracle scan of ||x| - |y|| / |x - y|^0.5 over pairs straddling 0
        x = np.linspace(-1, 0, 201)[:-1]
        y = np.linspace(0, 1, 201)[1:]
        X, Y = np.meshgrid(x, y)
        assert est.seminorm >= np.max(np.abs(np.abs(X) - np.abs(Y)) / np.abs(X - Y) ** 0.5) - 1e-9

    def test_bump_refinement_stable(self):
        coarse = holder_norm_estimate(benchmark_bumps(), 2.0, grid=2049).value
        fine = holder_norm_estimate(benchmark_bumps(), 2.0, grid=4097).value
        assert np.isfinite(coarse)
        assert fine == pytest.approx(coarse, rel=0.05)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            holder_norm_estimate(benchmark_bumps(), 0.0)
