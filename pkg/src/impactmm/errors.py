"""Exception taxonomy, mapped to CLI exit codes in cli.py."""
from __future__ import annotations


class ConfigError(ValueError):
    """Bad configuration or usage (exit code 1)."""


class PropertyViolation(AssertionError):
    """A verification property failed on simulated data (exit code 2)."""


class SimulationFault(RuntimeError):
    """Runtime fault inside a simulation (exit code 3)."""


class LiquidityExceededError(SimulationFault):
    """A trade asked for more volume than the book holds."""


class AdmissibilityError(SimulationFault):
    """An action violated an admissibility precondition."""
