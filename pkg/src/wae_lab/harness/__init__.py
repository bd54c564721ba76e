"""Monte Carlo experiment drivers, configuration and command-line interface."""

from .config import ExperimentSpec, load_config, make_spec, parse_config, parse_model, parse_model_list
from .experiments import (
    ExperimentResult, TailReport, run_conc_yatracos, run_corollary1, run_corollary2, run_dim,
    run_experiment, run_rate_tv, run_rate_w1, run_wae_end_to_end, tail_report,
)

__all__ = [
    "ExperimentSpec", "load_config", "make_spec", "parse_config", "parse_model", "parse_model_list",
    "ExperimentResult", "TailReport", "run_conc_yatracos", "run_corollary1", "run_corollary2", "run_dim",
    "run_experiment", "run_rate_tv", "run_rate_w1", "run_wae_end_to_end", "tail_report",
]
