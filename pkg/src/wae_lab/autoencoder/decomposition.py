"""Triangle-inequality split of the reconstruction error (one-dimensional case)."""

from __future__ import annotations

import io
from dataclasses import dataclass, fields
from typing import Callable, Optional

import numpy as np

from ..errors import DimensionMismatchError
from ..measures import DensityModel, DiscreteMeasure, pushforward, sample
from ..rng import derive_seed
from ..transport import w1
from .monge import monge_map_1d
from .objective import WaeConfig

REFERENCE_FACTOR = 20


@dataclass(frozen=True)
class ErrorDecomposition:
    """Transport distances around the reconstruction error.

    ``e1`` encoder approximation, ``e2`` decoder approximation against the
    transport map, ``e3`` statistical error of the sample, ``total`` the
    reconstruction distance to the reference; ``slack = e1 + e2 + 2 e3 - total``.
    ``substitution`` is the distance between two independent reference
    samples of sizes N and 2N, a gauge of the reference's own error.
    """

    n: int
    N: int
    e1: float
    e2: float
    e3: float
    total: float
    substitution: float

    @property
    def slack(self) -> float:
        return self.e1 + self.e2 + 2.0 * self.e3 - self.total

    def as_row(self) -> dict:
        row = {f.name: getattr(self, f.name) for f in fields(self)}
        row["slack"] = self.slack
        return row


def decompose_error(enc: Callable, dec: Callable, input_model: DensityModel, cfg: WaeConfig, n: int,
                    seed: Optional[int] = None, data: Optional[DiscreteMeasure] = None,
                    latent_sample: Optional[DiscreteMeasure] = None,
                    reference_from_input: bool = False) -> ErrorDecomposition:
    """Split ``W1((dec o enc)# mu_n, reference)`` into encoder, decoder and sampling parts.

    The reference for the input law is ``T # rho_N`` with ``T`` the monotone
    map from the latent target onto the input law and ``rho_N`` a latent
    sample of size ``N = 20 n``; it is an exact N-sample of the input law and
    makes the three-term bound hold identically.  ``reference_from_input``
    draws it independently from the input law instead (the bound then holds
    only up to the reference's own sampling error).

    ``enc`` and ``dec`` are callables on ``(k, 1)`` arrays (nets or maps).
    """
    rho = cfg.latent_target
    if input_model.dim != 1 or rho.dim != 1:
        raise DimensionMismatchError("the decomposition needs one-dimensional data and codes")
    seed = cfg.seed if seed is None else seed
    N = REFERENCE_FACTOR * n
    T = monge_map_1d(rho, input_model)
    if data is None:
        data = sample(input_model, n, derive_seed(seed, n, 0))
    if latent_sample is None:
        latent_sample = sample(rho, N, derive_seed(seed, n, 1))
    N = latent_sample.n
    recon = pushforward(data, lambda x: dec(enc(x)))
    decoded = pushforward(latent_sample, dec)
    transported = pushforward(latent_sample, T)
    if reference_from_input:
        reference = sample(input_model, N, derive_seed(seed, n, 3))
    else:
        reference = transported
    twice = pushforward(sample(rho, 2 * N, derive_seed(seed, n, 2)), T)
    return ErrorDecomposition(
        n=data.n, N=N,
        e1=w1(recon, decoded),
        e2=w1(decoded, transported),
        e3=w1(data, reference),
        total=w1(recon, reference),
        substitution=w1(reference, twice),
    )


def decompositions_to_csv(rows) -> str:
    buf = io.StringIO()
    names = ["n", "N", "e1", "e2", "e3", "total", "slack", "substitution"]
    buf.write(",".join(names) + "\n")
    for d in rows:
        r = d.as_row()
        buf.write(",".join(f"{r[k]:.17g}" if isinstance(r[k], float) else str(r[k]) for k in names) + "\n")
    return buf.getvalue()
