import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wae_lab.errors import DegenerateFitError
from wae_lab.rates import fit_line, fit_rate
from wae_lab.rng import make_rng

NS = 2 ** np.arange(6, 13)


class TestFitRate:
    def test_exact_power_law(self):
        fit = fit_rate(NS, 3.0 * NS ** -0.5)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)

    def test_constant(self):
        assert fit_rate(NS, np.full(len(NS), 0.2)).slope == pytest.approx(0.0, abs=1e-12)

    def test_noisy_inverse(self):
        ns = 2 ** np.arange(5, 13)
        rng = make_rng(0)
        slopes = [fit_rate(ns, ns ** -1.0 * (1 + 0.01 * rng.standard_normal(len(ns)))).slope for _ in range(50)]
        assert all(abs(s + 1.0) <= 0.05 for s in slopes)

    def test_too_few_points(self):
        with pytest.raises(DegenerateFitError):
            fit_rate([1, 2, 3], [1.0, 0.5, 0.3])

    def test_nonpositive(self):
        with pytest.raises(DegenerateFitError):
            fit_rate(NS, np.linspace(-1, 1, len(NS)))

    def test_stderr_matches_textbook(self):
        rng = make_rng(1)
        x = np.linspace(0, 1, 10)
        y = 2 * x + 0.1 * rng.standard_normal(10)
        fit = fit_line(x, y)
        resid = y - fit.predict(x)
        s2 = resid @ resid / 8
        assert fit.stderr == pytest.approx(np.sqrt(s2 / np.sum((x - x.mean()) ** 2)), rel=1e-12)

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=20), st.integers(0, 1000))
    def test_residuals_orthogonal(self, ys, seed):
        x = make_rng(seed).uniform(0, 5, len(ys))
        fit = fit_line(x, np.array(ys))
        r = fit.residuals
        scale = 1 + np.abs(ys).max()
        assert abs(r.sum()) <= 1e-9 * scale * len(ys)
        assert abs(r @ x) <= 1e-9 * scale * len(ys) * 5
