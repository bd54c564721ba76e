"""Probability models on compact boxes and weighted point clouds.

Densities live on an axis-aligned box (``support``).  Gaussians are truncated
to their box and renormalised, so every model here has compact support.  In
one dimension every family exposes ``cdf``/``ppf`` and sampling is by inverse
CDF; in higher dimension sampling is by rejection.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special, stats

from .errors import DimensionMismatchError, NonFiniteError, RejectionBudgetExceeded
from .rng import as_rng

Support = tuple  # tuple[tuple[float, float], ...]

BUMP_TRUNCATION_SIGMAS = 5.0


def _as_support(box) -> tuple:
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    for lo, hi in box:
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            raise ValueError(f"invalid support interval [{lo}, {hi}]")
    return box


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to an ``(n, dim)`` float array (1-D inputs are columns when dim == 1)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.shape[1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got {arr.shape[1]}")
    return arr


def _scalar_or_array(x, values: np.ndarray, dim: int = 1):
    # a scalar, or a single point given as a flat vector in d >= 2, yields a float
    single = np.ndim(x) == 0 or (dim > 1 and np.ndim(x) == 1)
    return float(values[0]) if single else values


# --------------------------------------------------------------------------
# smooth bump: exp(-1/(1-t^2)) on |t| < 1
# --------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def bump(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


class _BumpTable:
    """Cumulative integral of the standard bump, exact to ~1e-15."""

    def __init__(self, cells: int = 2048):
        self.edges = np.linspace(-1.0, 1.0, cells + 1)
        h = self.edges[1] - self.edges[0]
        mids = 0.5 * (self.edges[:-1] + self.edges[1:])
        nodes = mids[:, None] + 0.5 * h * _GL_NODES[None, :]
        cell_int = 0.5 * h * (bump(nodes) * _GL_WEIGHTS).sum(axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(cell_int)])
        self.total = float(self.cum[-1])
        self.h = h

    def cdf(self, t) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
        k = np.clip(((t + 1.0) / self.h).astype(int), 0, len(self.edges) - 2)
        left = self.edges[k]
        half = 0.5 * (t - left)
        nodes = (left + half)[..., None] + half[..., None] * _GL_NODES
        partial = half * (bump(nodes) * _GL_WEIGHTS).sum(axis=-1)
        return (self.cum[k] + partial) / self.total


_BUMP = _BumpTable()
BUMP_INTEGRAL = _BUMP.total  # integral of exp(-1/(1-t^2)) over (-1, 1)


def _safeguarded_ppf(cdf: Callable, dens: Callable, u: np.ndarray, lo: float, hi: float,
                     table: int = 2048, iters: int = 12) -> np.ndarray:
    """Invert a continuous CDF: table lookup for a bracket, then Newton kept inside it."""
    grid = np.linspace(lo, hi, table + 1)
    vals = cdf(grid)
    k = np.clip(np.searchsorted(vals, u, side="right") - 1, 0, table - 1)
    a, b = grid[k], grid[k + 1]
    fa, fb = vals[k], vals[k + 1]
    span = np.where(fb > fa, fb - fa, 1.0)
    x = a + (b - a) * np.clip((u - fa) / span, 0.0, 1.0)
    for _ in range(iters):
        r = cdf(x) - u
        a = np.where(r < 0, x, a)
        b = np.where(r < 0, b, x)
        d = dens(x)
        step = np.where(d > 0, x - r / np.where(d > 0, d, 1.0), 0.5 * (a + b))
        x = np.where((step >= a) & (step <= b), step, 0.5 * (a + b))
    return x


# --------------------------------------------------------------------------
# density families
# --------------------------------------------------------------------------


class DensityModel:
    """Common interface of the analytic density families.

    Subclasses provide ``support`` plus ``_pdf(points)``; one-dimensional
    families also provide ``_cdf`` and ``_ppf``.
    """

    support: Support

    @property
    def dim(self) -> int:
        return len(self.support)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.support])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.support])

    @property
    def diameter(self) -> float:
        """Euclidean diameter of the support box."""
        return float(np.linalg.norm(self.upper - self.lower))

    def inside(self, pts: np.ndarray) -> np.ndarray:
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def pdf(self, x):
        pts = as_points(x, self.dim)
        out = np.zeros(len(pts))
        ins = self.inside(pts)
        if ins.any():
            out[ins] = self._pdf(pts[ins])
        return _scalar_or_array(x, out, self.dim)

    def cdf(self, x):
        self._require_1d("cdf")
        x_arr = np.asarray(x, dtype=float)
        lo, hi = self.support[0]
        xc = np.clip(x_arr, lo, hi)
        out = np.clip(self._cdf(xc), 0.0, 1.0)
        out = np.where(x_arr <= lo, 0.0, np.where(x_arr >= hi, 1.0, out))
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        self._require_1d("ppf")
        u_arr = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        lo, hi = self.support[0]
        out = np.clip(self._ppf(u_arr), lo, hi)
        return float(out) if out.ndim == 0 else out

    def _require_1d(self, what: str):
        if self.dim != 1:
            raise DimensionMismatchError(f"{what} is only defined for one-dimensional models")

    # -- lower bound on the density over its support --------------------
    @property
    def bounded_below(self) -> bool:
        return self.floor > 0.0

    @property
    def floor(self) -> float:
        raise NotImplementedError

    # -- sampling --------------------------------------------------------
    def _ppf(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self.support[0]
        flat = u.reshape(-1)
        x = _safeguarded_ppf(self._cdf, lambda t: self._pdf(t.reshape(-1, 1)), flat, lo, hi)
        return x.reshape(u.shape)

    def _propose(self, rng: np.random.Generator, m: int):
        """Rejection proposal: (points, acceptance probability per point)."""
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, n: int, max_attempts: Optional[int] = None) -> np.ndarray:
        if self.dim == 1:
            return self.ppf(rng.random(n)).reshape(n, 1)
        budget = max_attempts if max_attempts is not None else 1000 * n + 10_000
        chunks, have, tried = [], 0, 0
        while have < n:
            m = max(2 * (n - have), 64)
            if tried + m > budget:
                m = budget - tried
            if m <= 0:
                raise RejectionBudgetExceeded(
                    f"rejection sampler accepted {have}/{n} points in {tried} proposals"
                )
            prop, acc = self._propose(rng, m)
            tried += m
            keep = rng.random(m) < acc
            chunks.append(prop[keep])
            have += int(keep.sum())
        return np.concatenate(chunks)[:n]


@dataclass(frozen=True, eq=False)
class Uniform(DensityModel):
    support: Support

    def __post_init__(self):
        object.__setattr__(self, "support", _as_support(self.support))

    @cached_property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def _pdf(self, pts):
        return np.full(len(pts), 1.0 / self.volume)

    def _cdf(self, x):
        lo, hi = self.support[0]
        return (x - lo) / (hi - lo)

    def _ppf(self, u):
        lo, hi = self.support[0]
        return lo + u * (hi - lo)

    @property
    def floor(self) -> float:
        return 1.0 / self.volume

    def _propose(self, rng, m):
        return self.lower + rng.random((m, self.dim)) * (self.upper - self.lower), np.ones(m)

    def __repr__(self):
        return f"Uniform({self.support})"


@dataclass(frozen=True, eq=False)
class Gaussian(DensityModel):
    """Gaussian law truncated to ``support`` (default: mean +/- ``truncation`` sd per axis)."""

    mean: tuple
    cov: tuple
    support: Optional[Support] = None
    truncation: float = 5.0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (len(mean), len(mean)):
            raise DimensionMismatchError("covariance shape does not match the mean")
        chol = np.linalg.cholesky(cov)
        sd = np.sqrt(np.diag(cov))
        box = self.support
        if box is None:
            box = tuple(zip(mean - self.truncation * sd, mean + self.truncation * sd))
        object.__setattr__(self, "mean", tuple(mean))
        object.__setattr__(self, "cov", tuple(map(tuple, cov)))
        object.__setattr__(self, "support", _as_support(box))
        object.__setattr__(self, "_mu", mean)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_prec", np.linalg.inv(cov))
        object.__setattr__(self, "_sd", sd)
        log_det = 2.0 * np.log(np.diag(chol)).sum()
        object.__setattr__(self, "_log_norm", -0.5 * (len(mean) * math.log(2 * math.pi) + log_det))
        object.__setattr__(self, "mass", self._box_mass())

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0, support=None, truncation: float = 5.0):
        box = None if support is None else (tuple(support),)
        return cls((mean,), ((sd * sd,),), box, truncation)

    def _box_mass(self) -> float:
        lo = (self.lower - self._mu) / self._sd
        hi = (self.upper - self._mu) / self._sd
        cov = np.asarray(self.cov)
        if np.allclose(cov, np.diag(np.diag(cov))):
            return float(np.prod(special.ndtr(hi) - special.ndtr(lo)))
        return float(stats.multivariate_normal.cdf(self.upper, self._mu, cov, lower_limit=self.lower,
                                                   abseps=1e-10, releps=1e-10))

    def untruncated_pdf(self, x):
        pts = as_points(x, self.dim)
        diff = pts - self._mu
        q = np.einsum("ni,ij,nj->n", diff, self._prec, diff)
        return _scalar_or_array(x, np.exp(self._log_norm - 0.5 * q), self.dim)

    def _pdf(self, pts):
        return self.untruncated_pdf(pts) / self.mass

    @cached_property
    def _trunc1d(self):
        mu, sd = self._mu[0], self._sd[0]
        lo, hi = self.support[0]
        return stats.truncnorm((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd)

    def _cdf(self, x):
        return self._trunc1d.cdf(x)

    def _ppf(self, u):
        return self._trunc1d.ppf(u)

    @property
    def floor(self) -> float:
        corners = np.array(np.meshgrid(*self.support, indexing="ij")).reshape(self.dim, -1).T
        return float(np.min(self._pdf(corners)))

    def _propose(self, rng, m):
        z = rng.standard_normal((m, self.dim)) @ self._chol.T + self._mu
        return z, self.inside(z).astype(float)

    def __repr__(self):
        if self.dim == 1:
            return f"Gaussian(mean={self.mean[0]:g}, sd={self._sd[0]:g}, support={self.support[0]})"
        return f"Gaussian(mean={self.mean}, cov={self.cov}, support={self.support})"


@dataclass(frozen=True, eq=False)
class BumpMixture(DensityModel):
    """Mixture of product C-infinity bumps, optionally blended with a uniform floor.

    Component ``k`` is the product over axes of ``bump((x - c_k) / w_k)``
    normalised to unit mass; ``floor_weight`` mixes in the uniform law on the
    support so that the density is bounded away from zero.
    """

    centers: tuple
    widths: tuple
    weights: tuple
    support: Support
    floor_weight: float = 0.0

    def __post_init__(self):
        support = _as_support(self.support)
        d = len(support)
        c = np.asarray(self.centers, dtype=float).reshape(-1, d)
        w = np.asarray(self.widths, dtype=float)
        w = np.broadcast_to(w.reshape(-1, 1) if w.ndim == 1 else w, c.shape).astype(float)
        p = np.asarray(self.weights, dtype=float)
        if len(p) != len(c) or np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-12):
            raise ValueError("bump weights must be nonnegative, one per centre, summing to 1")
        if np.any(w <= 0):
            raise ValueError("bump widths must be positive")
        lo = np.array([a for a, _ in support])
        hi = np.array([b for _, b in support])
        if np.any(c - w < lo - 1e-12) or np.any(c + w > hi + 1e-12):
            raise ValueError("every bump must lie inside the support box")
        if not 0.0 <= self.floor_weight < 1.0:
            raise ValueError("floor_weight must lie in [0, 1)")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "centers", tuple(map(tuple, c)))
        object.__setattr__(self, "widths", tuple(map(tuple, w)))
        object.__setattr__(self, "weights", tuple(p))
        object.__setattr__(self, "_c", c)
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_p", p)

    @cached_property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def _components(self, pts):
        t = (pts[:, None, :] - self._c[None]) / self._w[None]
        dens = bump(t) / (self._w[None] * BUMP_INTEGRAL)
        return dens.prod(axis=2)

    def _pdf(self, pts):
        mix = self._components(pts) @ self._p
        return (1.0 - self.floor_weight) * mix + self.floor_weight / self.volume

    def _cdf(self, x):
        x = np.asarray(x, dtype=float)
        c, w = self._c[:, 0], self._w[:, 0]
        t = (x[..., None] - c) / w
        mix = _BUMP.cdf(t) @ self._p
        lo, hi = self.support[0]
        return (1.0 - self.floor_weight) * mix + self.floor_weight * (x - lo) / (hi - lo)

    @property
    def floor(self) -> float:
        return self.floor_weight / self.volume

    @cached_property
    def _envelope(self) -> float:
        peak = np.exp(-1.0) / (self._w * BUMP_INTEGRAL)
        return float((1.0 - self.floor_weight) * (peak.prod(axis=1) @ self._p) + self.floor_weight / self.volume)

    def _propose(self, rng, m):
        pts = self.lower + rng.random((m, self.dim)) * (self.upper - self.lower)
        return pts, self._pdf(pts) / self._envelope

    def __repr__(self):
        return (f"BumpMixture(centers={self.centers}, widths={self.widths}, weights={self.weights}, "
                f"support={self.support}, floor_weight={self.floor_weight:g})")


def uniform(lo: float = 0.0, hi: float = 1.0) -> Uniform:
    return Uniform(((lo, hi),))


def unit_cube(d: int) -> Uniform:
    return Uniform(tuple((0.0, 1.0) for _ in range(d)))


def normal(mean: float = 0.0, sd: float = 1.0, support=None) -> Gaussian:
    return Gaussian.normal(mean, sd, support)


def benchmark_bumps() -> BumpMixture:
    """Built-in 1-D input law: two overlapping bumps on [0, 1] over a 10% uniform floor."""
    return BumpMixture(centers=((0.3,), (0.7,)), widths=(0.3, 0.3), weights=(0.5, 0.5),
                       support=((0.0, 1.0),), floor_weight=0.1)


# --------------------------------------------------------------------------
# empirical measures
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^d; ``seed`` records the stream that produced them."""

    points: np.ndarray
    weights: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pts.ndim != 2 or len(pts) < 1:
            raise ValueError("a discrete measure needs at least one atom")
        if len(w) != len(pts):
            raise ValueError(f"{len(pts)} atoms but {len(w)} weights")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteError("atoms must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum={w.sum()!r})")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, seed: Optional[int] = None) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        if n == 0:
            raise ValueError("a discrete measure needs at least one atom")
        return cls(pts, np.full(n, 1.0 / n), seed)

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def to_csv(self, target=None) -> Optional[str]:
        """Write ``x0,...,x{d-1},w`` rows with 17 significant digits.

        Returns the text when ``target`` is None, otherwise writes to the
        path or open file.
        """
        buf = io.StringIO()
        buf.write(",".join([f"x{k}" for k in range(self.dim)] + ["w"]) + "\n")
        for row, w in zip(self.points, self.weights):
            buf.write(",".join(f"{v:.17g}" for v in (*row, w)) + "\n")
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return None

    @classmethod
    def from_csv(cls, source) -> "DiscreteMeasure":
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source) as fh:
                text = fh.read()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split(",")
        if header[-1] != "w" or header[:-1] != [f"x{k}" for k in range(len(header) - 1)]:
            raise ValueError(f"unexpected header {lines[0]!r}")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        return cls(data[:, :-1], data[:, -1])


def sample(model: DensityModel, n: int, seed, max_attempts: Optional[int] = None) -> DiscreteMeasure:
    """``n`` i.i.d. draws from ``model`` with uniform weights, reproducible from ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = as_rng(seed)
    pts = model.draw(rng, n, max_attempts)
    provenance = None if isinstance(seed, np.random.Generator) else int(seed)
    return DiscreteMeasure(pts, np.full(n, 1.0 / n), provenance)


def pdf(model: DensityModel, x):
    return model.pdf(x)


def pushforward(m: DiscreteMeasure, fn: Callable[[np.ndarray], np.ndarray]) -> DiscreteMeasure:
    """Image measure ``fn # m``: atoms mapped row-wise (``fn`` gets the full ``(n, d)`` array)."""
    out = np.asarray(fn(m.points), dtype=float)
    if out.ndim == 1:
        out = out.reshape(m.n, -1)
    if out.shape[0] != m.n:
        raise ValueError(f"map returned {out.shape[0]} rows for {m.n} atoms")
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("map produced non-finite atoms")
    return DiscreteMeasure(out, m.weights, m.seed)
