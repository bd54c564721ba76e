"""Autoencoder objective: reconstruction transport cost plus a latent TV surrogate.

Reconstruction is the debiased Sinkhorn divergence between the batch and its
reconstruction; its gradient follows from the envelope theorem (the optimal
entropic plans weight the cost derivatives).  The latent term is a smooth
stand-in for total variation, used only for training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import ConfigError, DimensionMismatchError, NonFiniteError
from ..measures import DensityModel, DiscreteMeasure, Gaussian
from ..rng import as_rng
from ..transport import Metric, pairwise_cost, w1_sinkhorn
from .mlp import Mlp

SURROGATES = ("kde", "energy")
_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class WaeConfig:
    """Training and objective settings.

    ``lam`` multiplies the latent penalty; ``t_budget`` is the penalty level
    of the equivalent constrained problem (reported, not enforced).
    ``fidelity_k`` and ``fidelity_r`` parametrise the simulated encoder
    channel.
    """

    lam: float = 1.0
    t_budget: float = 0.0
    latent_target: DensityModel = field(default_factory=lambda: Gaussian.normal(0.0, 1.0))
    cost_metric: str = "euclidean"
    tv_surrogate: str = "kde"
    fidelity_k: float = 1.0
    fidelity_r: float = 1.0
    epochs: int = 30
    batch: int = 64
    step: float = 0.05
    seed: int = 0
    sinkhorn_epsilon: float = 0.05
    sinkhorn_tol: float = 1e-6
    sinkhorn_max_iter: int = 5000
    kde_grid: int = 256
    bandwidth_floor: float = 1e-3
    encoder_noise_sd: float = 0.0
    hidden: int = 8
    activation: str = "tanh"

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if self.t_budget < 0:
            raise ConfigError("t_budget must be nonnegative")
        if self.fidelity_k < 0 or self.fidelity_r < 1:
            raise ConfigError("encoder fidelity needs k >= 0 and r >= 1")
        if self.tv_surrogate not in SURROGATES:
            raise ConfigError(f"tv_surrogate must be one of {SURROGATES}")
        if self.epochs < 0 or self.batch < 1 or not self.step > 0:
            raise ConfigError("epochs >= 0, batch >= 1 and step > 0 are required")
        if not self.sinkhorn_epsilon > 0:
            raise ConfigError("sinkhorn_epsilon must be positive")
        if self.encoder_noise_sd < 0:
            raise ConfigError("encoder_noise_sd must be nonnegative")
        Metric.parse(self.cost_metric)

    def with_(self, **changes) -> "WaeConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ObjectiveValue:
    total: float
    recon: float
    penalty: float
    enc_grads: Optional[tuple] = None
    dec_grads: Optional[tuple] = None
    converged: bool = True


# --------------------------------------------------------------------------
# reconstruction term
# --------------------------------------------------------------------------


def _unit_diff(u: np.ndarray, v: np.ndarray, metric: Metric) -> np.ndarray:
    """Derivative of ``c(u_i, v_j)`` in ``u_i``: shape ``(n, m, d)``."""
    diff = u[:, None, :] - v[None, :, :]
    if metric is Metric.L1:
        return np.sign(diff)
    if metric is Metric.TRIVIAL:
        return np.zeros_like(diff)
    norm = np.linalg.norm(diff, axis=2, keepdims=True)
    return np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)


def reconstruction_term(x: DiscreteMeasure, y: np.ndarray, cfg: WaeConfig, grad: bool = False):
    """Debiased Sinkhorn divergence between ``x`` and atoms ``y`` (same weights).

    Returns ``(value, d value / d y or None, converged)``.
    """
    metric = Metric.parse(cfg.cost_metric)
    ym = DiscreteMeasure(y, x.weights)
    res = w1_sinkhorn(x, ym, metric, cfg.sinkhorn_epsilon, cfg.sinkhorn_max_iter,
                      cfg.sinkhorn_tol, debias=True)
    value = float(res.divergence)
    if not np.isfinite(value):
        raise NonFiniteError("reconstruction term is not finite")
    if not grad:
        return value, None, res.converged
    P = res.plan
    Q = res.self_plans[1]
    keep = x.weights > 0
    yk = y[keep]
    cross = np.einsum("ij,ijk->jk", P[np.ix_(keep, keep)], _unit_diff(yk, x.points[keep], metric).transpose(1, 0, 2))
    own = np.einsum("jk,jkd->jd", Q, _unit_diff(yk, yk, metric))
    g = np.zeros_like(y)
    g[keep] = cross - own
    return value, g, res.converged


# --------------------------------------------------------------------------
# latent surrogates
# --------------------------------------------------------------------------


def kde_grid(target: DensityModel, points: int) -> np.ndarray:
    """Fixed evaluation grid: the target support widened by half its length each side."""
    lo, hi = target.support[0]
    w = hi - lo
    return np.linspace(lo - 0.5 * w, hi + 0.5 * w, points)


def kde_tv_surrogate(z: np.ndarray, target: DensityModel, cfg: WaeConfig, grad: bool = False):
    """TV between a Gaussian KDE of the codes and the target density, on a grid.

    Bandwidth ``h = max(1.06 * sd(z) * m**(-1/5), floor)``; KDE mass that
    falls off the grid counts fully towards the distance.  Returns
    ``(value, d value / d z or None)``.
    """
    if target.dim != 1 or z.shape[1] != 1:
        raise DimensionMismatchError("the KDE surrogate is one-dimensional")
    zc = z[:, 0]
    m = len(zc)
    t = kde_grid(target, cfg.kde_grid)
    dt = t[1] - t[0]
    sd = float(np.std(zc))
    h_raw = 1.06 * sd * m ** (-0.2)
    floored = h_raw < cfg.bandwidth_floor
    h = cfg.bandwidth_floor if floored else h_raw
    u = (t[:, None] - zc[None, :]) / h
    k = np.exp(-0.5 * u * u) / _SQRT_2PI
    q = k.sum(axis=1) / (m * h)
    rho = target.pdf(t)
    diff = q - rho
    outside = 1.0 - q.sum() * dt
    value = 0.5 * (np.abs(diff).sum() * dt + abs(outside))
    if not grad:
        return float(value), None
    s = np.sign(diff)
    s_out = np.sign(outside)
    # dq_k / dz_i = k_ki u_ki / (m h^2);   dq_k / dh = sum_i k_ki (u_ki^2 - 1) / (m h^2)
    coef = 0.5 * dt * (s - s_out)
    dz = (coef[:, None] * k * u).sum(axis=0) / (m * h * h)
    if not floored and sd > 0:
        dq_dh = (k * (u * u - 1.0)).sum(axis=1) / (m * h * h)
        dv_dh = float(coef @ dq_dh)
        dh_dz = 1.06 * m ** (-0.2) * (zc - zc.mean()) / (m * sd)
        dz = dz + dv_dh * dh_dz
    return float(value), dz[:, None]


def energy_surrogate(z: np.ndarray, ref: np.ndarray, grad: bool = False):
    """Energy distance ``2 E|z - r| - E|z - z'| - E|r - r'|`` between codes and a reference sample."""
    n, m = len(z), len(ref)
    dzr = _unit_diff(z, ref, Metric.EUCLIDEAN)
    dzz = _unit_diff(z, z, Metric.EUCLIDEAN)
    czr = pairwise_cost(z, ref)
    czz = pairwise_cost(z, z)
    crr = pairwise_cost(ref, ref)
    value = 2.0 * czr.mean() - czz.mean() - crr.mean()
    if not grad:
        return float(value), None
    g = 2.0 * dzr.sum(axis=1) / (n * m) - 2.0 * dzz.sum(axis=1) / (n * n)
    return float(value), g


def latent_penalty(z: np.ndarray, cfg: WaeConfig, rng=None, grad: bool = False):
    if cfg.tv_surrogate == "kde":
        return kde_tv_surrogate(z, cfg.latent_target, cfg, grad)
    rng = as_rng(cfg.seed if rng is None else rng)
    ref = cfg.latent_target.draw(rng, len(z))
    return energy_surrogate(z, ref, grad)


# --------------------------------------------------------------------------
# full objective
# --------------------------------------------------------------------------


def fwae_objective(enc: Mlp, dec: Mlp, batch: DiscreteMeasure, cfg: WaeConfig, grad: bool = False,
                   rng=None) -> ObjectiveValue:
    """Reconstruction divergence plus ``lam`` times the latent surrogate.

    ``rng`` feeds the encoder noise head and the energy surrogate's
    reference sample; with a deterministic encoder and the KDE surrogate the
    objective is a deterministic function of the parameters.
    """
    if batch.n < 1:
        raise ValueError("empty batch")
    rng = as_rng(cfg.seed if rng is None else rng)
    z, enc_cache = enc.forward_cache(batch.points)
    if cfg.encoder_noise_sd > 0:
        z = z + cfg.encoder_noise_sd * rng.standard_normal(z.shape)
    y, dec_cache = dec.forward_cache(z)
    recon, g_y, conv = reconstruction_term(batch, y, cfg, grad)
    # the penalty is always reported; its gradient is only needed when it is weighted
    penalty, g_z_pen = latent_penalty(z, cfg, rng, grad and cfg.lam > 0)
    total = recon + cfg.lam * penalty
    if not np.isfinite(total):
        raise NonFiniteError("objective is not finite")
    if not grad:
        return ObjectiveValue(total, recon, penalty, converged=conv)
    dgw, dgb, g_z = dec.backward(dec_cache, g_y)
    if g_z_pen is not None:
        g_z = g_z + cfg.lam * g_z_pen
    egw, egb, _ = enc.backward(enc_cache, g_z)
    return ObjectiveValue(total, recon, penalty, (egw, egb), (dgw, dgb), conv)
