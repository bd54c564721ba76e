"""Flat ``key = value`` experiment configuration and model identifiers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..measures import BumpMixture, DensityModel, Gaussian, Uniform, benchmark_bumps, unit_cube

KINDS = ("rate-w1", "rate-tv", "conc-yatracos", "corollary1", "wae", "corollary2", "dim", "report")
RATE_KINDS = ("rate-w1", "rate-tv", "conc-yatracos", "corollary1", "wae", "corollary2")


# --------------------------------------------------------------------------
# model identifiers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """Point mass, usable wherever a sampler is expected."""

    location: Tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.location)

    @property
    def support(self):
        return tuple((x, x) for x in self.location)

    @property
    def diameter(self) -> float:
        return 0.0

    def draw(self, rng, n, max_attempts=None) -> np.ndarray:
        return np.tile(np.asarray(self.location, dtype=float), (n, 1))


_ID = re.compile(r"^\s*([a-z_0-9]+)\s*\((.*)\)\s*$")


def _floats(args: str) -> List[float]:
    return [float(a) for a in args.split(",") if a.strip()]


def parse_model(text: str):
    """Build a model from an identifier such as ``gaussian(0,1)`` or ``cube(4)``.

    Grammar: ``uniform(lo,hi)``, ``cube(d)``, ``gaussian(mean,sd)``,
    ``gaussian_box(mean,sd,lo,hi)``, ``bump_benchmark()``, ``atom(x1,...)``.
    """
    m = _ID.match(text)
    if not m:
        raise ConfigError(f"cannot parse model id {text!r}")
    name, args = m.group(1), m.group(2)
    try:
        vals = _floats(args)
        if name == "uniform":
            lo, hi = vals
            return Uniform(((lo, hi),))
        if name == "cube":
            (d,) = vals
            return unit_cube(int(d))
        if name == "gaussian":
            mean, sd = vals
            return Gaussian.normal(mean, sd)
        if name == "gaussian_box":
            mean, sd, lo, hi = vals
            return Gaussian.normal(mean, sd, (lo, hi))
        if name == "bump_benchmark":
            if vals:
                raise ValueError("bump_benchmark takes no arguments")
            return benchmark_bumps()
        if name == "atom":
            if not vals:
                raise ValueError("atom needs coordinates")
            return Atom(tuple(vals))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad arguments in model id {text!r}: {exc}") from None
    raise ConfigError(f"unknown model family {name!r} in {text!r}")


def parse_model_list(text: str) -> List[DensityModel]:
    """Semicolon-separated model ids; ``location_grid(lo,hi,k,sd)`` expands to k Gaussians."""
    out = []
    for part in (p.strip() for p in text.split(";")):
        if not part:
            continue
        m = _ID.match(part)
        if m and m.group(1) == "location_grid":
            try:
                lo, hi, k, sd = _floats(m.group(2))
            except ValueError:
                raise ConfigError(f"location_grid needs (lo,hi,k,sd): {part!r}") from None
            out.extend(Gaussian.normal(float(mu), sd) for mu in np.linspace(lo, hi, int(k)))
        else:
            out.append(parse_model(part))
    return out


# --------------------------------------------------------------------------
# configuration schema
# --------------------------------------------------------------------------


def _int_list(v: str) -> Tuple[int, ...]:
    return tuple(int(float(x)) for x in v.split(",") if x.strip())


def _float_list(v: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in v.split(",") if x.strip())


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _maybe_float(v: str) -> Optional[float]:
    return None if v.strip().lower() in ("", "none") else float(v)


SCHEMA: Dict[str, Tuple[Callable, object]] = {
    "experiment": (str, None),
    "n_grid": (_int_list, ()),
    "replicates": (int, 20),
    "seed": (int, 0),
    "input": (str, "uniform(0,1)"),
    "target": (str, "gaussian(0,1)"),
    "class": (str, ""),
    "vc_dim": (int, 0),
    "t_grid": (_float_list, (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0)),
    "reference_factor": (int, 20),
    "metric": (str, "euclidean"),
    "workers": (int, 1),
    "offset": (float, 0.0),
    "contamination": (str, "gaussian(1,1)"),
    "fidelity_k": (float, 0.0),
    "fidelity_r": (float, 1.0),
    "maps": (str, "oracle"),
    "perturbation": (float, 0.05),
    "epochs": (int, 20),
    "lam": (float, 1.0),
    "step": (float, 0.05),
    "batch": (int, 64),
    "hidden": (int, 8),
    "surrogate": (str, "kde"),
    "dim_n": (int, 4096),
    "eps_grid": (_float_list, ()),
    "expect_slope": (_maybe_float, None),
    "slope_tol": (float, 0.1),
    "expect_offset": (_maybe_float, None),
    "offset_tol": (float, 0.02),
    "k2_floor": (float, 0.1),
    "dim_range": (_float_list, ()),
    "strict_decades": (_bool, True),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment settings (every key of the schema, with defaults filled in)."""

    kind: str
    values: Dict[str, object] = field(default_factory=dict)
    source: str = ""

    def __getattr__(self, key):
        values = object.__getattribute__(self, "values")
        if key in values:
            return values[key]
        raise AttributeError(key)

    def with_(self, **changes) -> "ExperimentSpec":
        vals = dict(self.values)
        for k, v in changes.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            vals[k] = v
        spec = ExperimentSpec(self.kind, vals, self.source)
        spec.validate()
        return spec

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def validate(self):
        v = self.values
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.kind in RATE_KINDS:
            grid = v["n_grid"]
            if len(grid) < 4:
                raise ConfigError(f"n_grid too short: need at least 4 sizes, got {len(grid)}")
            if any(b <= a for a, b in zip(grid[:-1], grid[1:])) or grid[0] < 1:
                raise ConfigError("n_grid must be strictly increasing positive integers")
            if v["strict_decades"] and np.log10(grid[-1] / grid[0]) < 1.5 - 1e-12:
                raise ConfigError("n_grid must span at least 1.5 decades")
            if v["replicates"] < 1:
                raise ConfigError("replicates must be positive")
        if v["workers"] < 1:
            raise ConfigError("workers must be at least 1")

    def echo(self) -> str:
        return "\n".join(f"{k} = {_fmt(self.values[k])}" for k in sorted(self.values))


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, kind: Optional[str] = None) -> ExperimentSpec:
    """Parse ``key = value`` lines (``#`` starts a comment); unknown keys are errors."""
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val
    values = {}
    for key, (conv, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})") from None
        else:
            values[key] = default
    declared = values.pop("experiment")
    if kind is not None and declared is not None and declared != kind:
        raise ConfigError(f"config declares experiment {declared!r} but {kind!r} was requested")
    spec = ExperimentSpec(kind or declared or "", values, text)
    spec.validate()
    return spec


def load_config(path: str, kind: Optional[str] = None) -> ExperimentSpec:
    with open(path) as fh:
        return parse_config(fh.read(), kind)


def make_spec(kind: str, **values) -> ExperimentSpec:
    """Programmatic construction with the same defaults and validation as config files."""
    lines = []
    for k, v in values.items():
        lines.append(f"{k} = {_fmt(v)}")
    return parse_config("\n".join(lines), kind)
