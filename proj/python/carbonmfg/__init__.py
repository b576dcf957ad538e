"""Carbon-tax mean-field producers and the Stackelberg regulator."""

from ._core import (
    EquilibriumResult,
    ProducerParams,
    RegulatorPolicy,
    SolverError,
    TimeGrid,
    baseline_producer_params,
    config_hash,
    nash_eq,
    price_of_anarchy,
    riccati,
    run,
    social_opt,
)

__all__ = [
    "EquilibriumResult",
    "ProducerParams",
    "RegulatorPolicy",
    "SolverError",
    "TimeGrid",
    "baseline_producer_params",
    "config_hash",
    "nash_eq",
    "price_of_anarchy",
    "riccati",
    "run",
    "social_opt",
]
