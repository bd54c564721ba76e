"""Minibatch SGD on the autoencoder objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import integrate

from ..errors import NonFiniteError, NumericalUnderflow, TrainingDiverged
from ..measures import DensityModel, DiscreteMeasure, Gaussian, pushforward, sample
from ..rng import derive_seed, make_rng
from ..variation import CandidateClass, yatracos_norm
from .mlp import Mlp
from .objective import WaeConfig, fwae_objective

SMOOTH_WINDOW = 10
RISE_WINDOWS = 5


def model_moments(model: DensityModel) -> tuple:
    """Mean and standard deviation of a 1-D density model."""
    if isinstance(model, Gaussian):
        lo, hi = model.support[0]
        t = model._trunc1d
        return float(t.mean()), float(t.std())
    lo, hi = model.support[0]
    m1 = integrate.quad(lambda x: x * model.pdf(x), lo, hi, limit=200)[0]
    m2 = integrate.quad(lambda x: (x - m1) ** 2 * model.pdf(x), lo, hi, limit=200)[0]
    return m1, float(np.sqrt(m2))


def latent_class(target: DensityModel) -> CandidateClass:
    """Evaluation class around the latent target: shifted and rescaled Gaussian neighbours."""
    mean, sd = model_moments(target)
    members = [target] + [Gaussian.normal(mean + dm * sd, sf * sd)
                          for dm, sf in ((-0.5, 1.0), (0.5, 1.0), (0.0, 0.5), (0.0, 2.0))]
    return CandidateClass(tuple(members), vc_dim_hint=3)


def smoothed(trace, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Means over consecutive non-overlapping windows."""
    trace = np.asarray(trace, dtype=float)
    k = len(trace) // window
    return trace[: k * window].reshape(k, window).mean(axis=1)


def diverging(trace, rise_tol: float = 0.02) -> bool:
    """True when the smoothed loss rose in each of the last ``RISE_WINDOWS`` windows.

    A rise only counts if it exceeds ``rise_tol`` times the smallest smoothed
    value seen so far, so that minibatch noise near convergence is ignored.
    """
    s = smoothed(trace)
    if len(s) <= RISE_WINDOWS:
        return False
    tail = np.diff(s[-RISE_WINDOWS - 1:])
    return bool(np.all(tail > rise_tol * max(abs(s.min()), 1e-12)))


@dataclass(frozen=True, eq=False)
class TrainResult:
    """Trained pair, per-step losses and the final latent discrepancy.

    ``latent_yatracos`` is the Yatracos norm between the encoded training
    sample and the latent target over ``latent_class(target)``; the training
    surrogate is never used for this report.
    """

    enc: Mlp
    dec: Mlp
    trace: np.ndarray
    recon_trace: np.ndarray
    penalty_trace: np.ndarray
    initial: tuple
    final: tuple
    latent_yatracos: float
    data: DiscreteMeasure

    @property
    def smoothed_trace(self) -> np.ndarray:
        return smoothed(self.trace)


def init_pair(cfg: WaeConfig, near_identity: bool = False):
    if near_identity:
        enc = Mlp.near_identity(cfg.hidden, 0.05, derive_seed(cfg.seed, 11), cfg.activation)
        dec = Mlp.near_identity(cfg.hidden, 0.05, derive_seed(cfg.seed, 12), cfg.activation)
    else:
        enc = Mlp.init((1, cfg.hidden, 1), cfg.activation, derive_seed(cfg.seed, 11))
        dec = Mlp.init((1, cfg.hidden, 1), cfg.activation, derive_seed(cfg.seed, 12))
    return enc, dec


def full_objective(enc: Mlp, dec: Mlp, data: DiscreteMeasure, cfg: WaeConfig, max_points: int = 512):
    """Objective on (a fixed thinning of) the training sample: ``(total, recon, penalty)``."""
    if data.n > max_points:
        idx = np.linspace(0, data.n - 1, max_points).round().astype(int)
        data = DiscreteMeasure.uniform(data.points[idx])
    v = fwae_objective(enc, dec, data, cfg, rng=make_rng(cfg.seed, 99))
    return v.total, v.recon, v.penalty


def train(cfg: WaeConfig, input_model: DensityModel, n: int, enc: Optional[Mlp] = None,
          dec: Optional[Mlp] = None, data: Optional[DiscreteMeasure] = None) -> TrainResult:
    """Plain minibatch SGD with a fixed step.

    Raises
    ------
    TrainingDiverged
        The loss became non-finite or the smoothed loss kept rising.
    """
    if data is None:
        data = sample(input_model, n, derive_seed(cfg.seed, n, 1))
    if enc is None or dec is None:
        e0, d0 = init_pair(cfg)
        enc = enc if enc is not None else e0
        dec = dec if dec is not None else d0
    initial = full_objective(enc, dec, data, cfg)
    rng = make_rng(cfg.seed, n, 2)
    totals: List[float] = []
    recons: List[float] = []
    pens: List[float] = []
    bsz = min(cfg.batch, data.n)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(data.n)
        for start in range(0, data.n - bsz + 1, bsz):
            idx = np.sort(perm[start:start + bsz])
            batch = DiscreteMeasure.uniform(data.points[idx])
            try:
                v = fwae_objective(enc, dec, batch, cfg, grad=True, rng=rng)
            except (NonFiniteError, NumericalUnderflow) as exc:
                # outputs large enough to underflow the entropic kernel mean the step blew up
                raise TrainingDiverged(f"loss blew up at epoch {epoch}: {exc}", np.array(totals)) from exc
            totals.append(v.total)
            recons.append(v.recon)
            pens.append(v.penalty)
            try:
                enc = enc.sgd_step(*v.enc_grads, cfg.step)
                dec = dec.sgd_step(*v.dec_grads, cfg.step)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"parameters blew up at epoch {epoch}", np.array(totals)) from exc
            if len(totals) % SMOOTH_WINDOW == 0 and diverging(totals):
                raise TrainingDiverged(f"smoothed loss rose {RISE_WINDOWS} windows running", np.array(totals))
    final = full_objective(enc, dec, data, cfg)
    codes = pushforward(data, enc)
    cls = latent_class(cfg.latent_target)
    lat = yatracos_norm(codes, cfg.latent_target, cls)
    return TrainResult(enc, dec, np.array(totals), np.array(recons), np.array(pens),
                       initial, final, lat, data)
