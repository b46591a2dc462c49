"""Option market making with hedging-induced price impact.

A simulation, training, and verification engine: piecewise-constant order
books with transient and permanent impact, self-exciting exogenous flow,
quote-driven client fills, a small neural quoting and hedging policy
trained by stochastic gradient, and executable no-free-lunch property
checks.
"""
from .config import Config, builtin_config, desk_scale, load_config
from .errors import (ConfigError, PropertyViolation, SimulationFault,
                     LiquidityExceededError, AdmissibilityError)
from .experiments import EXPERIMENTS, run_experiment
from .simulator import Model, rollout, train
from .verify import run_suite

__version__ = "0.1.0"

__all__ = [
    "Config", "builtin_config", "desk_scale", "load_config",
    "ConfigError", "PropertyViolation", "SimulationFault",
    "LiquidityExceededError", "AdmissibilityError",
    "EXPERIMENTS", "run_experiment",
    "Model", "rollout", "train",
    "run_suite",
    "__version__",
]
