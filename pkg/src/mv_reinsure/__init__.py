"""Equilibrium excess-of-loss reinsurance and investment under a mean-variance criterion."""

from .config import Config, load_config, write_config
from .equilibrium import (
    equilibrium_deductible,
    equilibrium_investment,
    equilibrium_strategy,
    equilibrium_value_functions,
    exponential_utility_strategy,
    intercept_B,
    intercept_b,
    precommit_terminal_retention,
    proportional_equilibrium_fraction,
    value_V,
    expectation_g,
    variance_mv,
)
from .model import (
    ClaimMeasure,
    Empirical,
    Exponential,
    ModelParams,
    PointMass,
    Strategy,
    ValidationError,
    claim_mean,
    retained_claim,
)

__version__ = "0.1.0"
