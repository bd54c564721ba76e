"""Wasserstein-1 between discrete measures: exact plans, dual certificates, Sinkhorn.

Two exact routes are available.  ``network_simplex`` solves the
transportation LP with POT's network simplex and then recovers dual
potentials from the optimal flow by complementary slackness (our own code,
so the primal and the dual certificate come from independent computations).
``sorted`` is the one-dimensional north-west-corner plan on sorted atoms,
optimal for any convex cost of ``|x - y|``, with closed-form potentials.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, LipschitzViolation, NumericalUnderflow, SolverError
from .measures import DiscreteMeasure

# keep POT from probing heavyweight array backends at import time
for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402


class Metric(enum.Enum):
    EUCLIDEAN = "euclidean"
    L1 = "l1"
    TRIVIAL = "trivial"

    @classmethod
    def parse(cls, value: Union[str, "Metric"]) -> "Metric":
        if isinstance(value, Metric):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown metric {value!r}; expected one of "
                             f"{[m.value for m in cls]}") from None


def pairwise_cost(x: np.ndarray, y: np.ndarray, metric="euclidean") -> np.ndarray:
    metric = Metric.parse(metric)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatchError(f"cost between dimensions {x.shape[1]} and {y.shape[1]}")
    if metric is Metric.EUCLIDEAN:
        return cdist(x, y, "euclidean")
    if metric is Metric.L1:
        return cdist(x, y, "cityblock")
    return (cdist(x, y, "hamming") > 0).astype(float)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    entries: np.ndarray
    metric: Metric

    @classmethod
    def between(cls, a: DiscreteMeasure, b: DiscreteMeasure, metric="euclidean") -> "CostMatrix":
        metric = Metric.parse(metric)
        c = pairwise_cost(a.points, b.points, metric)
        c.setflags(write=False)
        return cls(c, metric)

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling plus its cost and (optionally) dual potentials.

    ``phi`` lives on the source atoms and ``psi`` on the target atoms with the
    convention ``phi_i - psi_j <= c(x_i, y_j)``; the dual value is
    ``a . phi - b . psi``.
    """

    shape: Tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    cost: float
    metric: Metric
    phi: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    dual: Optional[float] = None
    method: str = ""

    @property
    def gap(self) -> Optional[float]:
        return None if self.dual is None else self.cost - self.dual

    @property
    def coupling(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def dense(self) -> np.ndarray:
        return self.coupling

    def marginals(self) -> Tuple[np.ndarray, np.ndarray]:
        rs = np.bincount(self.rows, weights=self.mass, minlength=self.shape[0])
        cs = np.bincount(self.cols, weights=self.mass, minlength=self.shape[1])
        return rs, cs

    def to_csv(self, target=None) -> Optional[str]:
        gap = float("nan") if self.gap is None else self.gap
        buf = io.StringIO()
        buf.write(f"# cost={self.cost:.17g},gap={gap:.17g}\n")
        buf.write("i,j,mass\n")
        for i, j, w in zip(self.rows, self.cols, self.mass):
            buf.write(f"{i},{j},{w:.17g}\n")
        text = buf.getvalue()
        if target is None:
            return text
        with open(target, "w", newline="") as fh:
            fh.write(text)
        return None


def _check_pair(a: DiscreteMeasure, b: DiscreteMeasure):
    if a.dim != b.dim:
        raise DimensionMismatchError(f"measures live in R^{a.dim} and R^{b.dim}")


# --------------------------------------------------------------------------
# one-dimensional sorted route
# --------------------------------------------------------------------------


def _sorted_plan(a: DiscreteMeasure, b: DiscreteMeasure, metric: Metric, potentials: bool):
    x, y = a.points[:, 0], b.points[:, 0]
    ia = np.argsort(x, kind="stable")
    ib = np.argsort(y, kind="stable")
    wa, wb = a.weights[ia], b.weights[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    # north-west corner: breakpoints of the merged cumulative weights
    br = np.union1d(ca, cb)
    lo = np.concatenate([[0.0], br[:-1]])
    mass = br - lo
    keep = mass > 0
    lo, mass = lo[keep], mass[keep]
    ri = np.minimum(np.searchsorted(ca, lo, side="right"), len(ca) - 1)
    ci = np.minimum(np.searchsorted(cb, lo, side="right"), len(cb) - 1)
    rows, cols = ia[ri], ib[ci]
    dist = np.abs(x[rows] - y[cols])
    if metric is Metric.TRIVIAL:
        dist = (dist > 0).astype(float)
    cost = float(mass @ dist)
    phi = psi = dual = None
    if potentials and metric is not Metric.TRIVIAL:
        phi, psi = _potentials_1d(x, y, a.weights, b.weights)
        dual = float(a.weights @ phi - b.weights @ psi)
    return TransportPlan((a.n, b.n), rows, cols, mass, cost, metric, phi, psi, dual, "sorted")


def _potentials_1d(x, y, wx, wy):
    """1-Lipschitz Kantorovich potential with slope -sign(F - G) between merged atoms."""
    t = np.concatenate([x, y])
    signed = np.concatenate([wx, -wy])
    order = np.argsort(t, kind="stable")
    ts, ds = t[order], np.cumsum(signed[order])
    # F - G just to the right of each merged atom (tied atoms take the last value)
    last = np.r_[ts[1:] != ts[:-1], True]
    ut, diff = ts[last], ds[last]
    slope = -np.sign(np.where(np.abs(diff) < 1e-15, 0.0, diff))
    f = np.concatenate([[0.0], np.cumsum(slope[:-1] * np.diff(ut))])
    phi = f[np.searchsorted(ut, x)]
    psi = f[np.searchsorted(ut, y)]
    return phi, psi


# --------------------------------------------------------------------------
# network simplex route with slackness potentials
# --------------------------------------------------------------------------


def potentials_from_plan(coupling: np.ndarray, cost: np.ndarray, tol: float = 0.0):
    """Dual potentials satisfying complementary slackness for an optimal coupling.

    On each connected component of the support graph the equalities
    ``phi_i - psi_j = c_ij`` fix the potentials up to a shift (the
    lowest-indexed node of a component is pinned at zero).  Shifts between
    components solve the difference constraints implied by
    ``phi_i - psi_j <= c_ij`` by Bellman-Ford on the component graph.
    """
    n, m = cost.shape
    rows, cols = np.nonzero(coupling > tol)
    graph = coo_matrix((np.ones(len(rows)), (rows, n + cols)), shape=(n + m, n + m)).tocsr()
    graph = graph + graph.T
    k, labels = connected_components(graph, directed=False)
    pot = np.zeros(n + m)  # phi for sources, psi for targets
    roots = np.full(k, n + m)
    np.minimum.at(roots, labels, np.arange(n + m))
    for root in roots:
        order, pred = breadth_first_order(graph, root, directed=False)
        for node in order[1:]:
            p = pred[node]
            if node >= n:  # target reached from source p
                pot[node] = pot[p] - cost[p, node - n]
            else:  # source reached from target p
                pot[node] = pot[p] + cost[node, p - n]
    phi, psi = pot[:n], pot[n:]
    if k == 1:
        return phi, psi
    # W[c, c'] = min over i in c, j in c' of c_ij - phi_i + psi_j
    reduced = cost - phi[:, None] + psi[None, :]
    lab_s, lab_t = labels[:n], labels[n:]
    W = np.full((k, k), np.inf)
    ot_idx = np.argsort(lab_t, kind="stable")
    t_labels = lab_t[ot_idx]
    starts = np.r_[0, np.nonzero(np.diff(t_labels))[0] + 1]
    by_col = np.minimum.reduceat(reduced[:, ot_idx], starts, axis=1)
    os_idx = np.argsort(lab_s, kind="stable")
    s_labels = lab_s[os_idx]
    s_starts = np.r_[0, np.nonzero(np.diff(s_labels))[0] + 1]
    block = np.minimum.reduceat(by_col[os_idx], s_starts, axis=0)
    W[np.ix_(s_labels[s_starts], t_labels[starts])] = block
    np.fill_diagonal(W, 0.0)
    # shifts o satisfy o_c - o_c' <= W[c, c']
    o = np.zeros(k)
    for _ in range(k + 1):
        new = np.minimum(o, (o[None, :] + W).min(axis=1))
        if np.all(o - new <= 1e-14):
            break
        o = new
    else:
        raise SolverError("negative cycle while fitting potentials: the plan is not optimal")
    return phi + o[lab_s], psi + o[lab_t]


def _simplex_plan(a: DiscreteMeasure, b: DiscreteMeasure, metric: Metric, potentials: bool):
    C = pairwise_cost(a.points, b.points, metric)
    G, log = ot.emd(a.weights, b.weights, C, numItermax=max(100_000, 50 * a.n * b.n), log=True)
    if log.get("warning"):
        raise SolverError(f"network simplex did not certify optimality: {log['warning']}")
    rows, cols = np.nonzero(G)
    mass = G[rows, cols]
    cost = float(mass @ C[rows, cols])
    phi = psi = dual = None
    if potentials:
        phi, psi = potentials_from_plan(G, C)
        dual = float(a.weights @ phi - b.weights @ psi)
    return TransportPlan((a.n, b.n), rows, cols, mass, cost, metric, phi, psi, dual, "network_simplex")


def w1_exact(a: DiscreteMeasure, b: DiscreteMeasure, metric="euclidean", method: str = "auto",
             potentials: bool = True) -> TransportPlan:
    """Optimal coupling and W1 cost between two discrete measures.

    Parameters
    ----------
    method : {"auto", "network_simplex", "sorted"}
        ``auto`` uses the sorted route for one-dimensional Euclidean/L1
        problems and the network simplex otherwise.
    potentials : bool
        Also recover dual potentials and the duality gap.
    """
    _check_pair(a, b)
    metric = Metric.parse(metric)
    if method == "auto":
        method = "sorted" if a.dim == 1 and metric is not Metric.TRIVIAL else "network_simplex"
    if method == "sorted":
        if a.dim != 1:
            raise DimensionMismatchError("the sorted route needs one-dimensional measures")
        return _sorted_plan(a, b, metric, potentials)
    if method == "network_simplex":
        return _simplex_plan(a, b, metric, potentials)
    raise ValueError(f"unknown method {method!r}")


def w1(a: DiscreteMeasure, b: DiscreteMeasure, metric="euclidean") -> float:
    """W1 cost only (no potentials)."""
    return w1_exact(a, b, metric, potentials=False).cost


def w1_dual_value(a: DiscreteMeasure, b: DiscreteMeasure, metric, potentials,
                  atol: float = 1e-9) -> float:
    """Dual objective ``a . phi - b . psi`` after checking the Lipschitz constraint.

    ``potentials`` is either a pair ``(phi, psi)`` of values on the atoms of
    ``a`` and ``b`` or a single callable critic evaluated on both.
    """
    _check_pair(a, b)
    if callable(potentials):
        phi = np.asarray(potentials(a.points), dtype=float).reshape(-1)
        psi = np.asarray(potentials(b.points), dtype=float).reshape(-1)
    else:
        phi, psi = (np.asarray(p, dtype=float).reshape(-1) for p in potentials)
    if len(phi) != a.n or len(psi) != b.n:
        raise DimensionMismatchError("potentials do not match the number of atoms")
    C = pairwise_cost(a.points, b.points, metric)
    excess = phi[:, None] - psi[None, :] - C
    worst = int(np.argmax(excess))
    i, j = divmod(worst, b.n)
    if excess[i, j] > atol:
        raise LipschitzViolation(i, j, float(excess[i, j]))
    return float(a.weights @ phi - b.weights @ psi)


def certify_duality(plan: TransportPlan, a: DiscreteMeasure, b: DiscreteMeasure,
                    tol: float = 1e-6) -> float:
    """Recompute the dual value of ``plan``'s potentials; return the gap or raise."""
    if plan.phi is None:
        raise SolverError("plan carries no potentials")
    dual = w1_dual_value(a, b, plan.metric, (plan.phi, plan.psi))
    gap = plan.cost - dual
    if abs(gap) > tol:
        raise SolverError(f"duality gap {gap:.3e} exceeds {tol:g}")
    return gap


def w1_1d_closed_form(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Mean absolute difference of order statistics (equal-size, equal-weight 1-D samples)."""
    if a.dim != 1 or b.dim != 1:
        raise DimensionMismatchError("closed form needs one-dimensional measures")
    if a.n != b.n:
        raise ValueError(f"closed form needs equal atom counts, got {a.n} and {b.n}")
    u = 1.0 / a.n
    if np.max(np.abs(a.weights - u)) > 1e-15 or np.max(np.abs(b.weights - u)) > 1e-15:
        raise ValueError("closed form needs uniform weights")
    return float(np.mean(np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0]))))


# --------------------------------------------------------------------------
# entropic route
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SinkhornResult:
    """Log-domain Sinkhorn output.

    ``cost`` is the transport cost of the entropic plan, ``value`` the
    entropic objective (equal to the dual at convergence).  With debiasing,
    ``divergence = value(a, b) - (value(a, a) + value(b, b)) / 2``.
    """

    cost: float
    value: float
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    row_violation: float
    col_violation: float
    iterations: int
    converged: bool
    divergence: Optional[float] = None
    self_plans: Optional[Tuple[np.ndarray, np.ndarray]] = None


def _lse(M: np.ndarray, axis: int) -> np.ndarray:
    top = M.max(axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return (top + np.log(np.exp(M - top).sum(axis=axis, keepdims=True))).squeeze(axis)


def _sinkhorn_log(wa, wb, C, epsilon, max_iter, tol, symmetric=False):
    la, lb = np.log(wa), np.log(wb)
    f = np.zeros(len(wa))
    g = np.zeros(len(wb))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if symmetric:
            # averaged fixed point for the self-transport problem
            f = 0.5 * (f + epsilon * (la - _lse((f[None, :] - C) / epsilon, axis=1)))
            g = f
        else:
            f = epsilon * (la - _lse((g[None, :] - C) / epsilon, axis=1))
            g = epsilon * (lb - _lse((f[:, None] - C) / epsilon, axis=0))
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise NumericalUnderflow(f"potentials became non-finite at epsilon={epsilon:g}")
        if it % 5 == 0 or it == max_iter:
            logP = (f[:, None] + g[None, :] - C) / epsilon
            rv = float(np.abs(np.exp(_lse(logP, axis=1)) - wa).sum())
            cv = float(np.abs(np.exp(_lse(logP, axis=0)) - wb).sum())
            if max(rv, cv) <= tol:
                converged = True
                break
    P = np.exp((f[:, None] + g[None, :] - C) / epsilon)
    if not np.all(np.isfinite(P)):
        raise NumericalUnderflow(f"plan became non-finite at epsilon={epsilon:g}")
    rv = float(np.abs(P.sum(axis=1) - wa).sum())
    cv = float(np.abs(P.sum(axis=0) - wb).sum())
    value = float(wa @ f + wb @ g - epsilon * (P.sum() - 1.0))
    return P, f, g, value, rv, cv, it, converged


def w1_sinkhorn(a: DiscreteMeasure, b: DiscreteMeasure, metric="euclidean", epsilon: float = 0.05,
                max_iter: int = 5000, tol: float = 1e-9, debias: bool = False) -> SinkhornResult:
    """Entropy-regularised W1 by log-domain Sinkhorn iterations.

    Raises
    ------
    NumericalUnderflow
        If ``epsilon`` is too small relative to the cost scale for double
        precision, or the iteration produces non-finite potentials.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    _check_pair(a, b)
    keep_a, keep_b = a.weights > 0, b.weights > 0
    xa, wa = a.points[keep_a], a.weights[keep_a]
    xb, wb = b.points[keep_b], b.weights[keep_b]
    C = pairwise_cost(xa, xb, metric)
    if C.max(initial=0.0) / epsilon > 1e12:
        raise NumericalUnderflow(f"epsilon={epsilon:g} is too small for cost scale {C.max():g}")
    P, f, g, value, rv, cv, it, conv = _sinkhorn_log(wa, wb, C, epsilon, max_iter, tol)
    cost = float((P * C).sum())
    full = np.zeros((a.n, b.n))
    full[np.ix_(keep_a, keep_b)] = P
    fa = np.full(a.n, -np.inf)
    fa[keep_a] = f
    gb = np.full(b.n, -np.inf)
    gb[keep_b] = g
    divergence = None
    self_plans = None
    if debias:
        Caa = pairwise_cost(xa, xa, metric)
        Cbb = pairwise_cost(xb, xb, metric)
        Paa, *_, vaa, _, _, _, ca = _sinkhorn_log(wa, wa, Caa, epsilon, max_iter, tol, symmetric=True)
        Pbb, *_, vbb, _, _, _, cb = _sinkhorn_log(wb, wb, Cbb, epsilon, max_iter, tol, symmetric=True)
        divergence = value - 0.5 * (vaa + vbb)
        conv = conv and ca and cb
        self_plans = (Paa, Pbb)
    return SinkhornResult(cost, value, full, fa, gb, rv, cv, it, conv, divergence, self_plans)
