"""Total variation, Scheffé sets and minimum-distance (Yatracos) estimation.

For a finite candidate class, every ordered pair ``(f, g)`` contributes the
set ``{x : f(x) >= g(x)}``; the Yatracos norm of ``p - q`` is the largest
discrepancy ``|p(A) - q(A)|`` over those sets.  Complements are not
enumerated since the discrepancy is complement-invariant for probability
measures.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize

from .errors import DimensionMismatchError, QuadratureError, RootFindingError
from .measures import DensityModel, DiscreteMeasure, Gaussian, as_points

MAX_INTERVALS = 4
SCAN_POINTS = 4097

MeasureLike = Union[DensityModel, DiscreteMeasure]


def _quad(fn, lo, hi, points=None, epsabs=1e-11, limit=500):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            pts = None
            if points is not None:
                pts = [p for p in points if lo < p < hi] or None
            val, err = integrate.quad(fn, lo, hi, points=pts, epsabs=epsabs, epsrel=1e-10, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return val, err


# --------------------------------------------------------------------------
# Scheffé sets
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScheffeSet:
    """The region ``{x : f(x) >= g(x)}`` restricted to the union of the supports.

    In one dimension ``intervals`` holds the region as disjoint closed
    intervals; otherwise membership is decided pointwise by comparing the
    densities.
    """

    f: DensityModel
    g: DensityModel
    intervals: Optional[Tuple[Tuple[float, float], ...]] = None

    @property
    def dim(self) -> int:
        return self.f.dim

    def contains(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        if self.intervals is not None:
            t = pts[:, 0]
            out = np.zeros(len(t), dtype=bool)
            for lo, hi in self.intervals:
                out |= (t >= lo) & (t <= hi)
            return out
        inside = self.f.inside(pts) | self.g.inside(pts)
        return inside & (self.f.pdf(pts) >= self.g.pdf(pts))

    def mass(self, measure: MeasureLike) -> float:
        """Probability of the set under a density model or a discrete measure."""
        if isinstance(measure, DiscreteMeasure):
            return float(measure.weights[self.contains(measure.points)].sum())
        if measure.dim != self.dim:
            raise DimensionMismatchError("measure and set dimensions differ")
        if self.intervals is not None:
            lo = np.array([a for a, _ in self.intervals])
            hi = np.array([b for _, b in self.intervals])
            return float(np.sum(measure.cdf(hi) - measure.cdf(lo)))
        if self.dim == 2:
            return _mass_2d(self, measure)
        raise DimensionMismatchError("set probabilities under densities need d <= 2")


def _gaussian_breakpoints(f: Gaussian, g: Gaussian) -> list:
    """Real roots of log f - log g for two truncated 1-D Gaussians."""
    m1, m2 = f.mean[0], g.mean[0]
    v1, v2 = f.cov[0][0], g.cov[0][0]
    # log f - log g = A x^2 + B x + C
    A = 0.5 / v2 - 0.5 / v1
    B = m1 / v1 - m2 / v2
    C = (0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 + 0.5 * np.log(v2 / v1)
         - np.log(f.mass) + np.log(g.mass))
    if abs(A) < 1e-14 * max(1.0 / v1, 1.0 / v2):
        return [] if B == 0 else [-C / B]
    disc = B * B - 4 * A * C
    if disc < 0:
        return []
    r = np.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (B + np.copysign(r, B)) if B != 0 else -0.5 * r
    roots = [q / A, C / q] if q != 0 else [0.0]
    return sorted(roots)


def _scan_breakpoints(h: Callable, lo: float, hi: float, n: int = SCAN_POINTS) -> list:
    grid = np.linspace(lo, hi, n)
    vals = h(grid)
    s = np.sign(vals)
    roots = []
    for k in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        try:
            roots.append(optimize.brentq(h, grid[k], grid[k + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
        except (ValueError, RuntimeError) as exc:
            raise RootFindingError(f"root refinement failed in [{grid[k]}, {grid[k + 1]}]") from exc
    return roots


def _region_1d(h: Callable, breaks: Sequence[float], lo: float, hi: float, f_sup, g_sup):
    """Merge segments between breakpoints on which ``h >= 0``."""
    pts = sorted({lo, hi, *f_sup, *g_sup, *(b for b in breaks if lo < b < hi)})
    segs = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        # outside both supports nothing is in the region
        in_any = (f_sup[0] <= mid <= f_sup[1]) or (g_sup[0] <= mid <= g_sup[1])
        if in_any and h(np.array([mid]))[0] >= 0:
            if segs and segs[-1][1] == a:
                segs[-1] = (segs[-1][0], float(b))
            else:
                segs.append((float(a), float(b)))
    return tuple(segs)


def scheffe_set(f: DensityModel, g: DensityModel) -> ScheffeSet:
    """The set where ``f`` dominates ``g`` (intervals in 1-D, an indicator otherwise)."""
    if f.dim != g.dim:
        raise DimensionMismatchError("densities live in different dimensions")
    if f.dim != 1:
        return ScheffeSet(f, g, None)
    f_sup, g_sup = f.support[0], g.support[0]
    lo, hi = min(f_sup[0], g_sup[0]), max(f_sup[1], g_sup[1])

    def h(x):
        return f.pdf(np.asarray(x, dtype=float)) - g.pdf(np.asarray(x, dtype=float))

    if isinstance(f, Gaussian) and isinstance(g, Gaussian):
        breaks = _gaussian_breakpoints(f, g)
    else:
        breaks = _scan_breakpoints(h, lo, hi)
    segs = _region_1d(h, breaks, lo, hi, f_sup, g_sup)
    if len(segs) > MAX_INTERVALS:
        raise RootFindingError(f"set splits into {len(segs)} intervals (limit {MAX_INTERVALS})")
    return ScheffeSet(f, g, segs)


def _mass_2d(A: ScheffeSet, measure: DensityModel) -> float:
    """Nested quadrature: the inner integral runs over the y-slices of the set."""
    (x0, x1), (y0, y1) = measure.support

    def slice_mass(x):
        def h(y):
            pts = np.column_stack([np.full(len(np.atleast_1d(y)), x), np.atleast_1d(y)])
            fp, gp = A.f.pdf(pts), A.g.pdf(pts)
            inside = A.f.inside(pts) | A.g.inside(pts)
            return np.where(inside, fp - gp, -1.0)

        breaks = _scan_breakpoints(h, y0, y1, 513)
        sup = (y0, y1)
        segs = _region_1d(h, breaks, y0, y1, sup, sup)
        return sum(_quad(lambda y: measure.pdf([x, y]), a, b, epsabs=1e-9)[0] for a, b in segs)

    return _quad(slice_mass, x0, x1, epsabs=1e-7, limit=200)[0]


# --------------------------------------------------------------------------
# total variation
# --------------------------------------------------------------------------


def tv_analytic(f: DensityModel, g: DensityModel) -> float:
    """Half the L1 distance between two densities, by adaptive quadrature (d <= 2)."""
    if f.dim != g.dim:
        raise DimensionMismatchError("densities live in different dimensions")
    if f.dim == 1:
        lo = min(f.support[0][0], g.support[0][0])
        hi = max(f.support[0][1], g.support[0][1])
        kinks = [*f.support[0], *g.support[0]]
        if isinstance(f, Gaussian):
            kinks.append(f.mean[0])
        if isinstance(g, Gaussian):
            kinks.append(g.mean[0])
        val, _ = _quad(lambda x: abs(f.pdf(x) - g.pdf(x)), lo, hi, points=kinks)
        return float(min(max(0.5 * val, 0.0), 1.0))
    if f.dim == 2:
        lo = np.minimum(f.lower, g.lower)
        hi = np.maximum(f.upper, g.upper)

        def inner(x):
            return _quad(lambda y: abs(f.pdf([x, y]) - g.pdf([x, y])), lo[1], hi[1],
                         points=[f.lower[1], f.upper[1], g.lower[1], g.upper[1]], epsabs=1e-9)[0]

        val, _ = _quad(inner, lo[0], hi[0], points=[f.lower[0], f.upper[0], g.lower[0], g.upper[0]],
                       epsabs=1e-8, limit=200)
        return float(min(max(0.5 * val, 0.0), 1.0))
    raise DimensionMismatchError("quadrature total variation is limited to d <= 2")


def tv_between_discrete(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Exact TV between atomic measures (atoms matched by exact coordinates)."""
    if a.dim != b.dim:
        raise DimensionMismatchError("measures live in different dimensions")
    pts = np.concatenate([a.points, b.points])
    _, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    k = inv.max() + 1
    pa = np.bincount(inv[:a.n], weights=a.weights, minlength=k)
    pb = np.bincount(inv[a.n:], weights=b.weights, minlength=k)
    return float(min(0.5 * np.abs(pa - pb).sum(), 1.0))


def epsilon_close(distance: float, epsilon: float) -> bool:
    """Two measures are epsilon-close when their distance is at most ``epsilon``."""
    return bool(distance <= epsilon)


# --------------------------------------------------------------------------
# candidate classes and the minimum-distance estimator
# --------------------------------------------------------------------------


def default_vc_hint(members: Sequence[DensityModel]) -> int:
    """VC-dimension constant for the set family of a Gaussian class.

    Scheffé sets of Gaussians are sign regions of quadratics: ``1 + d + d(d+1)/2``
    monomials for full covariances and ``1 + 2d`` for diagonal ones.
    """
    d = members[0].dim
    if all(isinstance(m, Gaussian) for m in members):
        diag = all(np.allclose(np.asarray(m.cov), np.diag(np.diag(np.asarray(m.cov)))) for m in members)
        return 1 + 2 * d if diag else 1 + d + d * (d + 1) // 2
    raise ValueError("vc_dim_hint must be given for non-Gaussian classes")


@dataclass(frozen=True, eq=False)
class CandidateClass:
    members: Tuple[DensityModel, ...]
    vc_dim_hint: Optional[int] = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("a candidate class needs at least one member")
        if len({m.dim for m in members}) != 1:
            raise DimensionMismatchError("class members live in different dimensions")
        hint = self.vc_dim_hint if self.vc_dim_hint is not None else default_vc_hint(members)
        if int(hint) < 1:
            raise ValueError("vc_dim_hint must be at least 1")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "vc_dim_hint", int(hint))

    def __len__(self):
        return len(self.members)

    @property
    def dim(self) -> int:
        return self.members[0].dim

    @property
    def sets(self) -> Tuple[ScheffeSet, ...]:
        cached = self.__dict__.get("_sets")
        if cached is None:
            cached = tuple(scheffe_set(self.members[i], self.members[j])
                           for i, j in itertools.combinations(range(len(self.members)), 2))
            object.__setattr__(self, "_sets", cached)
        return cached

    def set_masses(self, measure: MeasureLike) -> np.ndarray:
        return np.array([A.mass(measure) for A in self.sets])

    @property
    def member_masses(self) -> np.ndarray:
        """Matrix of member probabilities, one row per member, one column per set."""
        cached = self.__dict__.get("_mm")
        if cached is None:
            cached = np.array([self.set_masses(m) for m in self.members])
            object.__setattr__(self, "_mm", cached)
        return cached


def _masses(measure: MeasureLike, cls: CandidateClass) -> np.ndarray:
    for k, m in enumerate(cls.members):
        if m is measure:
            return cls.member_masses[k]
    return cls.set_masses(measure)


def yatracos_norm(p: MeasureLike, q: MeasureLike, cls: CandidateClass) -> float:
    """Largest probability discrepancy between ``p`` and ``q`` over the class's Scheffé sets."""
    if len(cls) < 2:
        raise ValueError("the Yatracos norm needs a class with at least two members")
    if p is q:
        return 0.0
    return float(np.max(np.abs(_masses(p, cls) - _masses(q, cls))))


def yatracos_distances(samples: MeasureLike, cls: CandidateClass) -> np.ndarray:
    """Yatracos distance from every class member to ``samples``."""
    if len(cls) < 2:
        return np.zeros(1)
    emp = _masses(samples, cls)
    return np.max(np.abs(cls.member_masses - emp[None, :]), axis=1)


def yatracos_minimizer(samples: MeasureLike, cls: CandidateClass) -> DensityModel:
    """Minimum-distance estimate: the first member with the smallest Yatracos distance."""
    if len(cls) == 0:
        raise ValueError("empty candidate class")
    if len(cls) == 1:
        return cls.members[0]
    return cls.members[int(np.argmin(yatracos_distances(samples, cls)))]
