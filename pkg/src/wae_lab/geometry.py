"""Covering numbers, a covering-based dimension estimate, distortion and smoothness checks."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from .errors import DegenerateFitError, DimensionMismatchError, NonFiniteError
from .measures import DensityModel, DiscreteMeasure, as_points
from .rates import RateFit, fit_line
from .rng import as_rng

S_GRID = (2.1, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0)
_MINKOWSKI_P = {"euclidean": 2, "l1": 1, "chebyshev": np.inf}


def _points(x) -> np.ndarray:
    if isinstance(x, DiscreteMeasure):
        return x.points
    arr = np.asarray(x, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def _cell_side(epsilon: float, dim: int, metric: str) -> float:
    """Largest grid cell side whose cell fits in a ball of diameter ``epsilon``."""
    if metric == "chebyshev":
        return epsilon
    if metric == "euclidean":
        return epsilon / np.sqrt(dim)
    if metric == "l1":
        return epsilon / dim
    raise ValueError(f"unknown metric {metric!r}")


def greedy_clusters(pts: np.ndarray, epsilon: float, metric: str = "euclidean") -> np.ndarray:
    """Label atoms by the first greedy centre within ``epsilon / 2`` (index order)."""
    tree = cKDTree(pts)
    labels = np.full(len(pts), -1)
    k = 0
    for i in range(len(pts)):
        if labels[i] >= 0:
            continue
        near = np.asarray(tree.query_ball_point(pts[i], 0.5 * epsilon, p=_MINKOWSKI_P[metric]))
        free = near[labels[near] < 0]
        labels[free] = k
        labels[i] = k
        k += 1
    return labels


def grid_clusters(pts: np.ndarray, epsilon: float, metric: str = "euclidean") -> np.ndarray:
    """Label atoms by occupied cell of a grid tiled over their bounding box."""
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    side = _cell_side(epsilon, pts.shape[1], metric)
    per_axis = np.maximum(np.ceil(span / side), 1.0)
    h = np.where(span > 0, span / per_axis, 1.0)
    keys = np.minimum(np.floor((pts - lo) / h), per_axis - 1).astype(np.int64)
    _, labels = np.unique(keys, axis=0, return_inverse=True)
    return labels.reshape(-1)


def covering_number(pts, epsilon: float, metric: str = "euclidean") -> int:
    """Upper bound on the number of diameter-``epsilon`` balls covering ``pts``.

    The smaller of a greedy cover (balls of radius ``epsilon / 2`` centred at
    atoms) and a grid cover.  On the line the bound is at most twice the
    optimum.
    """
    pts = _points(pts)
    if len(pts) == 0:
        raise ValueError("empty point set")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    g = int(greedy_clusters(pts, epsilon, metric).max()) + 1
    c = int(grid_clusters(pts, epsilon, metric).max()) + 1
    return min(g, c)


def _kept_clusters(labels: np.ndarray, weights: np.ndarray, pts: np.ndarray, tau: float) -> int:
    mass = np.bincount(labels, weights=weights)
    centre = weights @ pts
    sums = np.zeros((len(mass), pts.shape[1]))
    np.add.at(sums, labels, pts)
    sizes = np.bincount(labels)
    spread = np.linalg.norm(sums / sizes[:, None] - centre, axis=1)
    # lightest clusters go first; among equal masses the farthest from the centroid
    order = np.lexsort((-spread, mass))
    dropped = np.searchsorted(np.cumsum(mass[order]), tau * (1 + 1e-12) + 1e-15, side="right")
    return max(len(mass) - int(dropped), 1)


def covering_number_tau(m: DiscreteMeasure, epsilon: float, tau: float, metric: str = "euclidean") -> int:
    """Cover after discarding at most ``tau`` of the mass, lightest clusters first."""
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must lie in [0, 1)")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    pts, w = m.points, m.weights
    counts = [_kept_clusters(lab(pts, epsilon, metric), w, pts, tau) for lab in (greedy_clusters, grid_clusters)]
    return min(counts)


@dataclass(frozen=True, eq=False)
class CoveringReport:
    epsilon_grid: np.ndarray
    counts: np.ndarray
    tau: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epsilon,count,tau\n")
        for e, c in zip(self.epsilon_grid, self.counts):
            buf.write(f"{e:.17g},{int(c)},{self.tau:.17g}\n")
        return buf.getvalue()


def covering_report(m, epsilon_grid: Sequence[float], tau: float = 0.0, metric: str = "euclidean") -> CoveringReport:
    """Counts over a decreasing epsilon grid, made monotone.

    A cover by smaller balls is also a cover by larger ones, so each count is
    replaced by the minimum over all smaller-or-equal radii; the result stays
    a valid upper bound.
    """
    if not isinstance(m, DiscreteMeasure):
        m = DiscreteMeasure.uniform(_points(m))
    eps = np.sort(np.asarray(epsilon_grid, dtype=float))[::-1]
    raw = np.array([covering_number_tau(m, e, tau, metric) for e in eps])
    counts = np.minimum.accumulate(raw[::-1])[::-1]
    return CoveringReport(eps, counts, float(tau))


# --------------------------------------------------------------------------
# dimension estimate
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DimensionEstimate:
    """Covering-based dimension estimate.

    ``proxies`` maps each candidate s to the fitted growth exponent of
    ``log N(eps, eps**(s/(s-2)))`` against ``-log eps``; ``s_hat`` is where
    the exponent first drops to s.
    """

    s_hat: float
    fit: RateFit
    proxies: dict
    clamped: bool
    window: np.ndarray
    epsilon_grid: np.ndarray

    @property
    def predicted_rate(self) -> float:
        return -1.0 / self.s_hat


def _tau_count(labels, weights, tau):
    mass = np.sort(np.bincount(labels, weights=weights))
    dropped = np.searchsorted(np.cumsum(mass), tau * (1 + 1e-12), side="right")
    return max(len(mass) - int(dropped), 1)


def wasserstein_dim_upper(m: DiscreteMeasure, epsilon_grid: Optional[Sequence[float]] = None,
                          s_grid: Sequence[float] = S_GRID, metric: str = "chebyshev",
                          min_occupancy: float = 4.0) -> DimensionEstimate:
    """Smallest s whose coupled-tau covering growth exponent does not exceed s.

    For each candidate s the mass allowance is ``tau = eps**(s / (s - 2))``.
    Counts come from grid covers; the fit uses the scales where cells hold
    at least ``min_occupancy`` atoms on average and more than one cell is
    occupied.  Between the bracketing candidates the crossing is refined by
    root finding; an estimate at the first candidate is reported as clamped.

    Raises
    ------
    DegenerateFitError
        Grid shorter than a decade, or fewer than three usable scales (e.g. a
        point mass, whose counts are all 1).
    """
    eps = np.asarray(epsilon_grid if epsilon_grid is not None else 1.0 / np.arange(2, 21), dtype=float)
    eps = np.sort(eps)[::-1]
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise DegenerateFitError("epsilon grid must lie in (0, 1)")
    if eps[0] / eps[-1] < 10.0 * (1 - 1e-12):
        raise DegenerateFitError("epsilon grid must span at least one decade")
    pts, w = m.points, m.weights
    labels = [grid_clusters(pts, e, metric) for e in eps]
    full = np.array([lab.max() + 1 for lab in labels])
    window = (m.n / full >= min_occupancy) & (full > 1)
    if window.sum() < 3:
        raise DegenerateFitError(f"only {int(window.sum())} usable scales (counts {full.tolist()})")
    x = -np.log(eps[window])

    def counts_at(s):
        return np.array([_tau_count(labels[i], w, eps[i] ** (s / (s - 2.0))) for i in np.nonzero(window)[0]])

    def proxy(s):
        return fit_line(x, np.log(counts_at(s))).slope

    proxies = {float(s): proxy(s) for s in s_grid}
    gaps = [proxies[float(s)] - s for s in s_grid]
    first = next((k for k, g in enumerate(gaps) if g <= 0), None)
    clamped = first is None or first == 0
    if first is None:
        s_hat = float(s_grid[-1])
    elif first == 0:
        s_hat = float(s_grid[0])
    else:
        s_hat = float(optimize.brentq(lambda s: proxy(s) - s, s_grid[first - 1], s_grid[first], xtol=1e-4))
    fit = fit_line(x, np.log(counts_at(s_hat)))
    return DimensionEstimate(s_hat, fit, proxies, clamped, window, eps)


# --------------------------------------------------------------------------
# distortion and smoothness
# --------------------------------------------------------------------------


def _dist(u: np.ndarray, v: np.ndarray, metric: str) -> np.ndarray:
    diff = u - v
    if metric == "euclidean":
        return np.linalg.norm(diff, axis=1)
    if metric == "l1":
        return np.abs(diff).sum(axis=1)
    if metric == "chebyshev":
        return np.abs(diff).max(axis=1)
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True, eq=False)
class QuasiIsometryResult:
    passed: bool
    A: float
    A_hat: float
    kind: Optional[str]
    first_violation: Optional[int]
    worst_pair: tuple
    worst_ratio: float
    n_pairs: int


def quasi_isometry_check(fn: Callable[[np.ndarray], np.ndarray], domain, A: float, n_pairs: int = 1000,
                         seed=0, domain_metric: str = "euclidean", codomain_metric: str = "euclidean",
                         pairs: Optional[tuple] = None) -> QuasiIsometryResult:
    """Sampled test of ``d1(x, y) / A <= d2(f(x), f(y)) <= A d1(x, y)``.

    Passing is a necessary condition only.  ``domain`` is a support box, a
    density model (its box is used), or a point set to draw pairs from;
    ``pairs=(X, Y)`` bypasses sampling.  ``A_hat`` is the smallest constant
    that passes on the drawn pairs.
    """
    if A < 1:
        raise ValueError("A must be at least 1")
    if pairs is not None:
        X, Y = (np.asarray(p, dtype=float) for p in pairs)
        X = X.reshape(len(X), -1)
        Y = Y.reshape(len(Y), -1)
    else:
        rng = as_rng(seed)
        if isinstance(domain, DensityModel):
            domain = domain.support
        if isinstance(domain, (DiscreteMeasure, np.ndarray)):
            P = _points(domain)
            idx = rng.integers(0, len(P), size=(n_pairs, 2))
            X, Y = P[idx[:, 0]], P[idx[:, 1]]
        else:
            lo = np.array([a for a, _ in domain])
            hi = np.array([b for _, b in domain])
            X = lo + rng.random((n_pairs, len(lo))) * (hi - lo)
            Y = lo + rng.random((n_pairs, len(lo))) * (hi - lo)
    fx = np.asarray(fn(X), dtype=float).reshape(len(X), -1)
    fy = np.asarray(fn(Y), dtype=float).reshape(len(Y), -1)
    d1 = _dist(X, Y, domain_metric)
    d2 = _dist(fx, fy, codomain_metric)
    ok = d1 > 0
    ratio = np.full(len(d1), 1.0)
    ratio[ok] = d2[ok] / d1[ok]
    with np.errstate(divide="ignore"):
        distortion = np.maximum(ratio, np.where(ratio > 0, 1.0 / ratio, np.inf))
    upper = ok & (d2 > A * d1 * (1 + 1e-12))
    lower = ok & (d2 * A < d1 * (1 - 1e-12))
    bad = upper | lower
    worst = int(np.argmax(distortion))
    first = int(np.argmax(bad)) if bad.any() else None
    kind = None
    if first is not None:
        kind = "upper" if upper[first] else "lower"
    return QuasiIsometryResult(
        passed=first is None, A=float(A), A_hat=float(max(distortion.max(initial=1.0), 1.0)),
        kind=kind, first_violation=first, worst_pair=(X[worst], Y[worst]),
        worst_ratio=float(ratio[worst]), n_pairs=len(d1),
    )


@dataclass(frozen=True)
class HolderEstimate:
    value: float
    sup_norms: tuple
    seminorm: float
    alpha: float
    step: float


def holder_norm_estimate(target, alpha: float, grid: int = 2049,
                         domain: Optional[tuple] = None) -> HolderEstimate:
    """Grid estimate of the Hölder norm of a 1-D density or function.

    The norm is the largest sup-norm among derivatives of order up to
    ``floor(alpha)`` plus the ``(alpha - floor(alpha))``-Hölder seminorm of
    the top derivative (its oscillation when ``alpha`` is an integer).
    Derivatives are second-order central differences.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if isinstance(target, DensityModel):
        if target.dim != 1:
            raise DimensionMismatchError("Hölder estimates are one-dimensional")
        lo, hi = domain if domain is not None else target.support[0]
        fn = target.pdf
    else:
        if domain is None:
            raise ValueError("a domain is needed for a plain function")
        lo, hi = domain
        fn = target
    x = np.linspace(lo, hi, grid)
    step = float(x[1] - x[0])
    k = int(np.floor(alpha))
    beta = alpha - k
    derivs = [np.asarray(fn(x), dtype=float)]
    for _ in range(k):
        derivs.append(np.gradient(derivs[-1], step, edge_order=2))
    if not all(np.all(np.isfinite(d)) for d in derivs):
        raise NonFiniteError("derivative estimate is not finite; refine the grid")
    sups = tuple(float(np.max(np.abs(d))) for d in derivs)
    top = derivs[-1]
    if beta == 0:
        semi = float(top.max() - top.min())
    else:
        semi = 0.0
        for start in range(0, grid, 512):
            blk = slice(start, start + 512)
            dx = np.abs(x[blk, None] - x[None, :])
            df = np.abs(top[blk, None] - top[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(dx > 0, df / dx ** beta, 0.0)
            semi = max(semi, float(q.max()))
    return HolderEstimate(max(sups) + semi, sups, semi, float(alpha), step)
