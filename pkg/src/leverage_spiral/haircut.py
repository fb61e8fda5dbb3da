"""Concentration- and liquidity-aware haircuts, and their effect on the spiral."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from .continuum import fit_power_law_exponent
from .impact import ImpactModel
from .spiral import MarketState, SpiralParams, SpiralTrace, _run

BOUNDED_SLOPE = 0.05
DIVERGENT_SLOPE = 0.2


@dataclass(frozen=True)
class HaircutPolicy:
    """Loan-to-value cap ``alpha_base / (1 + beta_conc*B/L + beta_liq*(L_ref/L - 1)+)``.

    ``B`` is the borrower's marked position and ``L`` the available liquidity.
    """

    alpha_base: float
    beta_conc: float = 0.0
    beta_liq: float = 0.0
    liquidity_ref: float = 1.0

    def __post_init__(self):
        if not (0 < self.alpha_base < 1):
            raise ValueError("alpha_base must lie in (0,1)")
        if self.beta_conc < 0 or self.beta_liq < 0:
            raise ValueError("beta_conc and beta_liq must be >= 0")
        if not self.liquidity_ref > 0:
            raise ValueError("liquidity_ref must be > 0")

    @property
    def static(self) -> bool:
        return self.beta_conc == 0 and self.beta_liq == 0


def effective_alpha(policy: HaircutPolicy, borrower_value: float, liquidity: float) -> float:
    if not liquidity > 0:
        raise ValueError("liquidity must be > 0")
    if borrower_value < 0:
        raise ValueError("borrower_value must be >= 0")
    scarcity = max(0.0, policy.liquidity_ref / liquidity - 1.0)
    return policy.alpha_base / (1.0 + policy.beta_conc * (borrower_value / liquidity) + policy.beta_liq * scarcity)


LiquidityModel = Callable[[MarketState], float]


def run_spiral_with_policy(
    init: MarketState,
    params: SpiralParams,
    policy: HaircutPolicy,
    model: ImpactModel,
    liquidity_model: Optional[LiquidityModel] = None,
) -> SpiralTrace:
    """``run_spiral`` with the cap recomputed each round from ``policy``.

    ``params.alpha`` is ignored; ``policy.alpha_base`` takes its place. The
    liquidity defaults to the constant ``policy.liquidity_ref``.
    """
    if liquidity_model is None:
        L = policy.liquidity_ref

        def liquidity_model(_state):
            return L

    def rule(state: MarketState) -> float:
        return effective_alpha(policy, state.x * state.S, liquidity_model(state))

    return _run(init, replace(params, alpha=policy.alpha_base), model, rule)


@dataclass(frozen=True)
class StabilityReport:
    classification: str  # bounded | divergent | undetermined
    slope: Optional[float]
    saturated: bool
    reason: str


def stability_report(trace: SpiralTrace, window: tuple[float, float] | None = None) -> StabilityReport:
    """Classify a spiral run from its late-window price slope and saturation."""
    if trace.saturated:
        return StabilityReport("bounded", None, True, f"borrowing stopped: {trace.termination}")
    if not trace.records:
        return StabilityReport("undetermined", None, False, "empty trace")
    if trace.init.S == trace.final_state.S:
        return StabilityReport("bounded", 0.0, False, "price never moved")
    try:
        fit = fit_power_law_exponent(trace.rounds(), trace.series("S"), window)
    except ValueError as exc:
        return StabilityReport("undetermined", None, False, str(exc))
    slope = fit.exponent
    if slope < BOUNDED_SLOPE:
        label = "bounded"
    elif slope > DIVERGENT_SLOPE:
        label = "divergent"
    else:
        label = "undetermined"
    return StabilityReport(label, slope, False, f"late-window price slope {slope:.6g}")


def find_suppressing_beta(
    init: MarketState,
    params: SpiralParams,
    model: ImpactModel,
    liquidity_ref: float = 1.0,
    beta_start: float = 1.0,
    factor: float = 2.0,
    beta_max: float = 1e8,
) -> tuple[Optional[float], Optional[StabilityReport]]:
    """Smallest ``beta_conc`` on a geometric grid whose run classifies bounded.

    Uses ``params.alpha`` as ``alpha_base``. Returns ``(None, None)`` if the
    grid is exhausted.
    """
    beta = beta_start
    while beta <= beta_max:
        policy = HaircutPolicy(params.alpha, beta_conc=beta, liquidity_ref=liquidity_ref)
        rep = stability_report(run_spiral_with_policy(init, params, policy, model))
        if rep.classification == "bounded":
            return beta, rep
        beta *= factor
    return None, None
