"""Collateralised leverage spirals under permanent price impact."""

__version__ = "0.1.0"

from .continuum import (
    ContinuumParams,
    ExponentPair,
    closed_form_exponents,
    compare_discrete_continuum,
    fit_power_law_exponent,
    integrate_ode,
    recursion_exponents,
)
from .errors import NumericalFailure, SolverError, ValidationError
from .haircut import HaircutPolicy, effective_alpha, find_suppressing_beta, run_spiral_with_policy, stability_report
from .impact import ImpactModel, eval_impact, solve_post_trade_price
from .kelly import KellyParams, classify_regress, kelly_fraction, simulate_regress
from .roundtrip import RoundtripParams, simulate_roundtrip, viability
from .spiral import (
    MarketState,
    SpiralParams,
    SpiralTrace,
    borrow_step,
    geometric_borrow_limit,
    invest_step,
    max_sustainable_extraction,
    run_spiral,
)

__all__ = [
    "ContinuumParams", "ExponentPair", "closed_form_exponents", "compare_discrete_continuum",
    "fit_power_law_exponent", "integrate_ode", "recursion_exponents",
    "NumericalFailure", "SolverError", "ValidationError",
    "HaircutPolicy", "effective_alpha", "find_suppressing_beta", "run_spiral_with_policy", "stability_report",
    "ImpactModel", "eval_impact", "solve_post_trade_price",
    "KellyParams", "classify_regress", "kelly_fraction", "simulate_regress",
    "RoundtripParams", "simulate_roundtrip", "viability",
    "MarketState", "SpiralParams", "SpiralTrace", "borrow_step", "geometric_borrow_limit",
    "invest_step", "max_sustainable_extraction", "run_spiral",
]
