"""Toy autoencoders, their objective, quantile transport maps and error splits."""

from .decomposition import ErrorDecomposition, decompose_error
from .fidelity import FidelityResult, simulate_encoder_fidelity
from .mlp import Mlp
from .monge import MongeMap, monge_map_1d
from .objective import ObjectiveValue, WaeConfig, fwae_objective
from .training import TrainResult, latent_class, train

__all__ = [
    "ErrorDecomposition", "decompose_error", "FidelityResult", "simulate_encoder_fidelity", "Mlp",
    "MongeMap", "monge_map_1d", "ObjectiveValue", "WaeConfig", "fwae_objective", "TrainResult",
    "latent_class", "train",
]
