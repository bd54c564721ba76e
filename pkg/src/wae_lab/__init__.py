"""Consistency-rate laboratory for Wasserstein autoencoders with a total-variation latent penalty.

Exact and entropic W1 solvers, Scheffé/Yatracos tools for total variation,
covering-number geometry, small hand-differentiated autoencoders and a
Monte Carlo harness that fits empirical rates.
"""

from .measures import (
    BumpMixture, DensityModel, DiscreteMeasure, Gaussian, Uniform, benchmark_bumps, pdf, pushforward, sample,
)
from .rates import RateFit, fit_rate
from .transport import (
    CostMatrix, TransportPlan, w1, w1_1d_closed_form, w1_dual_value, w1_exact, w1_sinkhorn,
)
from .variation import (
    CandidateClass, ScheffeSet, scheffe_set, tv_analytic, tv_between_discrete, yatracos_minimizer, yatracos_norm,
)
from .geometry import (
    covering_number, covering_number_tau, holder_norm_estimate, quasi_isometry_check, wasserstein_dim_upper,
)

__version__ = "0.1.0"

__all__ = [
    "BumpMixture", "DensityModel", "DiscreteMeasure", "Gaussian", "Uniform", "benchmark_bumps", "pdf",
    "pushforward", "sample", "RateFit", "fit_rate", "CostMatrix", "TransportPlan", "w1", "w1_1d_closed_form",
    "w1_dual_value", "w1_exact", "w1_sinkhorn", "CandidateClass", "ScheffeSet", "scheffe_set", "tv_analytic",
    "tv_between_discrete", "yatracos_minimizer", "yatracos_norm", "covering_number", "covering_number_tau",
    "holder_norm_estimate", "quasi_isometry_check", "wasserstein_dim_upper",
]
