import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from wae_lab.errors import DimensionMismatchError, LipschitzViolation, NumericalUnderflow
from wae_lab.measures import DiscreteMeasure, Gaussian, sample
from wae_lab.rng import make_rng
from wae_lab.transport import (
    CostMatrix, Metric, certify_duality, pairwise_cost, potentials_from_plan, w1, w1_1d_closed_form,
    w1_dual_value, w1_exact, w1_sinkhorn,
)


def lp_oracle(a: DiscreteMeasure, b: DiscreteMeasure, metric="euclidean") -> float:
    """Transportation LP solved by HiGHS on the full coupling polytope."""
    C = pairwise_cost(a.points, b.points, metric)
    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A_eq[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a.weights, b.weights]), bounds=(0, None),
                  method="highs")
    assert res.status == 0
    return float(res.fun)


def random_measure(rng, n, d, uniform=False, lattice=False):
    pts = rng.integers(0, 4, size=(n, d)).astype(float) if lattice else rng.normal(size=(n, d))
    if uniform:
        return DiscreteMeasure.uniform(pts)
    w = rng.random(n) + 0.05
    return DiscreteMeasure(pts, w / w.sum())


@st.composite
def measures(draw, d=2, max_n=6):
    n = draw(st.integers(1, max_n))
    pts = draw(st.lists(st.lists(st.floats(-3, 3, allow_nan=False), min_size=d, max_size=d), min_size=n, max_size=n))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    return DiscreteMeasure(np.array(pts), w / w.sum())


class TestCostMatrix:
    def test_metrics(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        np.testing.assert_allclose(pairwise_cost(x, x, "euclidean"), [[0, np.sqrt(2)], [np.sqrt(2), 0]])
        np.testing.assert_allclose(pairwise_cost(x, x, "l1"), [[0, 2], [2, 0]])
        np.testing.assert_allclose(pairwise_cost(x, x, "trivial"), [[0, 1], [1, 0]])

    def test_self_cost_properties(self):
        rng = make_rng(0)
        m = random_measure(rng, 12, 3)
        for metric in Metric:
            C = CostMatrix.between(m, m, metric).entries
            assert np.all(C >= 0)
            np.testing.assert_array_equal(np.diag(C), 0)
            np.testing.assert_allclose(C, C.T)
            i, j, k = rng.integers(0, 12, size=(3, 200))
            assert np.all(C[i, k] <= C[i, j] + C[j, k] + 1e-12)

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            Metric.parse("cosine")


class TestW1Exact:
    def test_dirac_pair(self):
        plan = w1_exact(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0]))
        assert plan.cost == 1.0
        np.testing.assert_array_equal(plan.coupling, [[1.0]])

    def test_identical(self):
        m = random_measure(make_rng(1), 10, 2)
        assert w1(m, m) == pytest.approx(0.0, abs=1e-12)

    def test_sorted_matching_n8(self):
        rng = make_rng(2)
        a = DiscreteMeasure.uniform(rng.normal(size=(8, 1)))
        b = DiscreteMeasure.uniform(rng.normal(size=(8, 1)))
        oracle = np.mean(np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0])))
        for method in ("sorted", "network_simplex"):
            assert w1_exact(a, b, method=method).cost == pytest.approx(oracle, abs=1e-12)

    @pytest.mark.parametrize("metric", ["euclidean", "l1", "trivial"])
    @pytest.mark.parametrize("seed", range(6))
    def test_against_lp(self, metric, seed):
        rng = make_rng(3, seed)
        a = random_measure(rng, 1 + seed, 2, lattice=metric == "trivial")
        b = random_measure(rng, 4, 2, lattice=metric == "trivial")
        plan = w1_exact(a, b, metric)
        assert plan.cost == pytest.approx(lp_oracle(a, b, metric), abs=1e-9)
        assert abs(plan.gap) <= 1e-6

    def test_plan_marginals_and_cost(self):
        rng = make_rng(4)
        a, b = random_measure(rng, 30, 3), random_measure(rng, 25, 3)
        plan = w1_exact(a, b)
        rs, cs = plan.marginals()
        np.testing.assert_allclose(rs, a.weights, atol=1e-9)
        np.testing.assert_allclose(cs, b.weights, atol=1e-9)
        C = pairwise_cost(a.points, b.points)
        assert plan.cost == pytest.approx(float((plan.coupling * C).sum()), abs=1e-9)
        assert np.all(plan.coupling >= 0)

    def test_unequal_weights_1d_routes_agree(self):
        rng = make_rng(5)
        a, b = random_measure(rng, 40, 1), random_measure(rng, 17, 1)
        s = w1_exact(a, b, method="sorted")
        ns = w1_exact(a, b, method="network_simplex")
        assert s.cost == pytest.approx(ns.cost, abs=1e-12)
        assert abs(s.gap) <= 1e-9 and abs(ns.gap) <= 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            w1_exact(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0, 1.0]))

    def test_trivial_metric_equals_tv(self):
        rng = make_rng(6)
        a = random_measure(rng, 10, 1, lattice=True)
        b = random_measure(rng, 8, 1, lattice=True)
        atoms = np.unique(np.concatenate([a.points[:, 0], b.points[:, 0]]))
        pa = np.array([a.weights[a.points[:, 0] == t].sum() for t in atoms])
        pb = np.array([b.weights[b.points[:, 0] == t].sum() for t in atoms])
        assert w1(a, b, "trivial") == pytest.approx(0.5 * np.abs(pa - pb).sum(), abs=1e-12)

    def test_csv(self):
        plan = w1_exact(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0]))
        lines = plan.to_csv().splitlines()
        assert lines[0].startswith("# cost=1,gap=")
        assert lines[1:] == ["i,j,mass", "0,0,1"]

    @given(measures(), measures(), measures())
    def test_metric_axioms(self, a, b, c):
        ab, ba = w1(a, b), w1(b, a)
        assert ab == pytest.approx(ba, abs=1e-9)
        assert w1(a, c) <= ab + w1(b, c) + 1e-9
        assert w1(a, a) == pytest.approx(0.0, abs=1e-12)

    @given(measures(d=1, max_n=8), measures(d=1, max_n=8))
    def test_strong_duality_property(self, a, b):
        plan = w1_exact(a, b, method="network_simplex")
        assert abs(certify_duality(plan, a, b)) <= 1e-6


class TestPotentials:
    def test_lowest_index_pinned(self):
        rng = make_rng(7)
        a, b = random_measure(rng, 6, 2), random_measure(rng, 5, 2)
        plan = w1_exact(a, b, method="network_simplex")
        assert plan.phi[0] == 0.0

    def test_deterministic(self):
        rng = make_rng(8)
        a, b = random_measure(rng, 20, 2), random_measure(rng, 20, 2)
        p1 = w1_exact(a, b, method="network_simplex")
        p2 = w1_exact(a, b, method="network_simplex")
        np.testing.assert_array_equal(p1.phi, p2.phi)
        np.testing.assert_array_equal(p1.psi, p2.psi)

    def test_complementary_slackness(self):
        rng = make_rng(9)
        a, b = random_measure(rng, 15, 2), random_measure(rng, 12, 2)
        C = pairwise_cost(a.points, b.points)
        plan = w1_exact(a, b, method="network_simplex")
        phi, psi = potentials_from_plan(plan.coupling, C)
        slack = C - (phi[:, None] - psi[None, :])
        assert slack.min() >= -1e-9
        assert np.all(np.abs(slack[plan.coupling > 0]) <= 1e-9)


class TestDualValue:
    def test_zero_potentials(self):
        a, b = DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0])
        assert w1_dual_value(a, b, "euclidean", (np.zeros(1), np.zeros(1))) == 0.0

    def test_dirac_critic(self):
        a, b = DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0])
        # the dual is a . phi - b . psi; the maximising critic decreases from source to target
        assert w1_dual_value(a, b, "euclidean", lambda x: -x[:, 0]) == pytest.approx(1.0)
        assert w1_dual_value(a, b, "euclidean", lambda x: x[:, 0]) == pytest.approx(-1.0)

    def test_violation_reports_pair(self):
        a = DiscreteMeasure.uniform(np.array([[0.0], [5.0]]))
        b = DiscreteMeasure.uniform(np.array([[1.0], [2.0]]))
        with pytest.raises(LipschitzViolation) as info:
            w1_dual_value(a, b, "euclidean", (np.array([0.0, 10.0]), np.array([0.0, 0.0])))
        assert (info.value.i, info.value.j) == (1, 1)
        assert info.value.excess == pytest.approx(7.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_16_atoms(self, seed):
        rng = make_rng(10, seed)
        a, b = random_measure(rng, 16, 2), random_measure(rng, 16, 2)
        plan = w1_exact(a, b, method="network_simplex")
        dual = w1_dual_value(a, b, "euclidean", (plan.phi, plan.psi))
        assert abs(plan.cost - dual) <= 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_small_lp_brute_force(self, seed):
        # both the plan cost and the dual of the recovered potentials agree with the LP
        rng = make_rng(11, seed)
        a, b = random_measure(rng, 4, 2), random_measure(rng, 3, 2)
        plan = w1_exact(a, b, method="network_simplex")
        oracle = lp_oracle(a, b)
        assert plan.cost == pytest.approx(oracle, abs=1e-9)
        assert w1_dual_value(a, b, "euclidean", (plan.phi, plan.psi)) == pytest.approx(oracle, abs=1e-6)

    @given(measures(), measures())
    def test_weak_duality(self, a, b):
        rng = make_rng(12)
        # any 1-Lipschitz critic gives a lower bound
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        val = w1_dual_value(a, b, "euclidean", lambda x: x @ direction)
        assert val <= w1(a, b) + 1e-9


class TestClosedForm:
    def test_identical(self):
        m = DiscreteMeasure.uniform(np.array([[0.0], [1.0]]))
        assert w1_1d_closed_form(m, m) == 0.0

    def test_shift(self):
        a = DiscreteMeasure.uniform(np.array([[0.0], [2.0]]))
        b = DiscreteMeasure.uniform(np.array([[1.0], [3.0]]))
        assert w1_1d_closed_form(a, b) == 1.0

    def test_gaussian_shift(self):
        a = sample(Gaussian.normal(0.0, 1.0), 20_000, 1)
        b = sample(Gaussian.normal(1.0, 1.0), 20_000, 2)
        assert w1_1d_closed_form(a, b) == pytest.approx(1.0, abs=0.03)

    def test_requires_equal_sizes(self):
        with pytest.raises(ValueError):
            w1_1d_closed_form(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.uniform(np.zeros((2, 1))))

    def test_requires_uniform_weights(self):
        a = DiscreteMeasure(np.array([[0.0], [1.0]]), np.array([0.3, 0.7]))
        with pytest.raises(ValueError):
            w1_1d_closed_form(a, a)


class TestSinkhorn:
    def test_identical_tends_to_zero(self):
        m = random_measure(make_rng(13), 20, 1, uniform=True)
        costs = [w1_sinkhorn(m, m, epsilon=e).cost for e in (0.5, 0.1, 0.02, 0.005)]
        assert all(c2 < c1 for c1, c2 in zip(costs, costs[1:]))
        assert costs[-1] < 0.02

    def test_dirac_pair(self):
        res = w1_sinkhorn(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0]), epsilon=0.01)
        assert res.cost == pytest.approx(1.0, rel=0.05)
        assert res.converged

    def test_epsilon_grid_approaches_exact(self):
        rng = make_rng(14)
        a, b = random_measure(rng, 30, 2), random_measure(rng, 30, 2)
        exact = w1(a, b)
        gaps = [w1_sinkhorn(a, b, epsilon=e).cost - exact for e in (0.5, 0.1, 0.02)]
        assert all(g >= -1e-9 for g in gaps)
        assert gaps[0] > gaps[1] > gaps[2]

    def test_marginal_violation_reported(self):
        rng = make_rng(15)
        a, b = random_measure(rng, 25, 2), random_measure(rng, 20, 2)
        res = w1_sinkhorn(a, b, epsilon=0.1, tol=1e-7)
        assert res.converged and max(res.row_violation, res.col_violation) <= 1e-6
        capped = w1_sinkhorn(a, b, epsilon=0.01, max_iter=3)
        assert not capped.converged and capped.iterations == 3

    def test_underflow(self):
        a = DiscreteMeasure.dirac([0.0])
        b = DiscreteMeasure.dirac([1e6])
        with pytest.raises(NumericalUnderflow):
            w1_sinkhorn(a, b, epsilon=1e-7)

    def test_debiased_self_divergence_zero(self):
        m = random_measure(make_rng(16), 15, 2)
        res = w1_sinkhorn(m, m, epsilon=0.05, tol=1e-12, debias=True)
        assert res.divergence == pytest.approx(0.0, abs=1e-8)
