"""One-dimensional optimal transport maps by quantile matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError, RootFindingError
from ..measures import DensityModel


@dataclass(frozen=True, eq=False)
class MongeMap:
    """Monotone map ``target.ppf(source.cdf(x))`` carrying ``source`` onto ``target``."""

    source: DensityModel
    target: DensityModel

    def __call__(self, x):
        return _compose(self.target, self.source, x)

    def inverse(self, y):
        return _compose(self.source, self.target, y)

    @property
    def inverse_map(self) -> "MongeMap":
        return MongeMap(self.target, self.source)


def _compose(outer: DensityModel, inner: DensityModel, x):
    arr = np.asarray(x, dtype=float)
    out = outer.ppf(inner.cdf(arr))
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        bad = arr.reshape(-1)[~np.isfinite(out.reshape(-1))][0]
        raise RootFindingError(f"quantile inversion failed at x={bad!r}")
    return float(out) if out.ndim == 0 else out


def monge_map_1d(source: DensityModel, target: DensityModel) -> MongeMap:
    if source.dim != 1 or target.dim != 1:
        raise DimensionMismatchError("quantile maps are one-dimensional")
    return MongeMap(source, target)
