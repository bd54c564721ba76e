"""Least-squares line fits for log-log convergence rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError


@dataclass(frozen=True, eq=False)
class RateFit:
    """Ordinary least-squares line ``ys ~ intercept + slope * xs``.

    For rate fits ``xs`` and ``ys`` hold the logarithms of the sample sizes
    and errors.
    """

    xs: np.ndarray
    ys: np.ndarray
    slope: float
    intercept: float
    stderr: float

    @property
    def residuals(self) -> np.ndarray:
        return self.ys - (self.intercept + self.slope * self.xs)

    @property
    def rss(self) -> float:
        return float(np.sum(self.residuals ** 2))

    def predict(self, x) -> np.ndarray:
        return self.intercept + self.slope * np.asarray(x, dtype=float)


def fit_line(xs, ys) -> RateFit:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length vectors")
    if len(xs) < 2 or np.ptp(xs) == 0:
        raise DegenerateFitError("a line fit needs at least two distinct abscissae")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise DegenerateFitError("non-finite values in the fit data")
    X = np.column_stack([np.ones_like(xs), xs])
    coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
    intercept, slope = float(coef[0]), float(coef[1])
    resid = ys - X @ coef
    dof = len(xs) - 2
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        stderr = float(np.sqrt(sigma2 / np.sum((xs - xs.mean()) ** 2)))
    else:
        stderr = float("nan")
    return RateFit(xs, ys, slope, intercept, stderr)


def fit_rate(ns, errors) -> RateFit:
    """Slope of log(error) against log(n).

    Raises
    ------
    DegenerateFitError
        Fewer than four points or a nonpositive error.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(ns) < 4:
        raise DegenerateFitError(f"a rate fit needs at least 4 points, got {len(ns)}")
    if np.any(errors <= 0) or np.any(ns <= 0):
        raise DegenerateFitError("rate fits need positive sizes and errors")
    return fit_line(np.log(ns), np.log(errors))
