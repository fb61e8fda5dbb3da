"""Discrete borrow -> convert leverage spiral.

Each round:

1. accrue interest on the outstanding debt,
2. borrow up to the loan-to-value cap against the current marks
   (``y = alpha * x * S - z``, optionally clipped by a finite lending pool),
3. divert ``epsilon * y`` out of the scheme,
4. spend the rest on the risky asset, filling at the post-impact price.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .errors import NumericalFailure
from .impact import ImpactModel, eval_impact, solve_post_trade_price

TRACE_HEADER = ["round", "y_borrowed", "w_invested", "e_extracted", "x", "z", "S", "ltv"]


def fmt(v: float) -> str:
    return format(v, ".17g")


@dataclass(frozen=True)
class MarketState:
    """Risky units ``x``, riskless cash ``y``, debt ``z`` and price ``S``."""

    x: float
    y: float = 0.0
    z: float = 0.0
    S: float = 1.0

    def __post_init__(self):
        for name in ("x", "y", "z", "S"):
            if not math.isfinite(getattr(self, name)):
                raise NumericalFailure(f"state field {name} is not finite")
        if self.x < 0 or self.y < 0 or self.z < 0:
            raise ValueError("x, y and z must be >= 0")
        if not self.S > 0:
            raise ValueError("S must be > 0")

    @property
    def value(self) -> float:
        return self.x * self.S


@dataclass(frozen=True)
class SpiralParams:
    alpha: float
    epsilon: float = 0.0
    rounds: int = 1000
    rate_per_round: float = 0.0
    pool_cap: Optional[float] = None
    tol: float = 1e-12

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0,1)")
        if not (0 <= self.epsilon <= 1):
            raise ValueError("epsilon must lie in [0,1]")
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError("rounds must be a positive integer")
        if self.rate_per_round < 0:
            raise ValueError("rate must be >= 0")
        if self.pool_cap is not None and self.pool_cap < 0:
            raise ValueError("pool_cap must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    y_borrowed: float
    w_invested: float
    e_extracted: float
    state: MarketState
    ltv: float
    alpha: float


@dataclass
class SpiralTrace:
    init: MarketState
    params: SpiralParams
    model: ImpactModel
    records: list[RoundRecord] = field(default_factory=list)
    termination: str = "rounds_completed"
    # Set by policy runs; static runs leave it empty.
    alpha_path: list[float] = field(default_factory=list)

    @property
    def final_state(self) -> MarketState:
        return self.records[-1].state if self.records else self.init

    @property
    def total_borrowed(self) -> float:
        return math.fsum(r.y_borrowed for r in self.records)

    @property
    def total_invested(self) -> float:
        return math.fsum(r.w_invested for r in self.records)

    @property
    def total_extracted(self) -> float:
        return math.fsum(r.e_extracted for r in self.records)

    @property
    def price_monotonic(self) -> bool:
        """True when the price rose strictly in every recorded round."""
        prev = self.init.S
        for r in self.records:
            if not r.state.S > prev:
                return False
            prev = r.state.S
        return bool(self.records)

    @property
    def saturated(self) -> bool:
        return self.termination in ("capacity_exhausted", "pool_exhausted")

    def series(self, name: str) -> list[float]:
        return [getattr(r.state, name) for r in self.records]

    def rounds(self) -> list[int]:
        return [r.round for r in self.records]


def borrow_step(
    state: MarketState, params: SpiralParams, already_lent: float = 0.0, alpha: float | None = None
) -> tuple[MarketState, float]:
    """Borrow against current marks up to the loan-to-value cap.

    ``alpha`` overrides ``params.alpha`` (used by state-dependent haircut
    policies).
    """
    a = params.alpha if alpha is None else alpha
    y_new = max(0.0, a * state.x * state.S - state.z)
    if params.pool_cap is not None:
        y_new = max(0.0, min(y_new, params.pool_cap - already_lent))
    return replace(state, y=state.y + y_new, z=state.z + y_new), y_new


def invest_step(state: MarketState, w: float, model: ImpactModel, tol: float | None = None) -> MarketState:
    """Convert ``w`` of cash into the risky asset at the post-impact price."""
    if w < 0 or w > state.y * (1 + 1e-15):
        raise ValueError("w must lie in [0, state.y]")
    if w == 0:
        return state
    S_new = solve_post_trade_price(model, state.S, w, tol)
    return MarketState(x=state.x + w / S_new, y=max(0.0, state.y - w), z=state.z, S=S_new)


AlphaRule = Callable[[MarketState], float]


def _run(
    init: MarketState,
    params: SpiralParams,
    model: ImpactModel,
    alpha_rule: AlphaRule | None = None,
) -> SpiralTrace:
    if init.y != 0:
        raise ValueError("initial riskless cash y0 must be 0")
    trace = SpiralTrace(init=init, params=params, model=model)
    stop_below = params.tol * init.x * init.S
    state = init
    lent = 0.0
    for j in range(1, int(params.rounds) + 1):
        if params.rate_per_round:
            state = replace(state, z=state.z * (1.0 + params.rate_per_round))
        alpha = params.alpha if alpha_rule is None else alpha_rule(state)
        if params.pool_cap is not None and params.pool_cap - lent <= stop_below:
            trace.termination = "pool_exhausted"
            break
        state, y_new = borrow_step(state, params, lent, alpha)
        if y_new <= stop_below:
            trace.termination = "capacity_exhausted"
            break
        lent += y_new
        e = params.epsilon * y_new
        w = y_new - e
        # Extracted cash leaves the borrower's account.
        state = replace(state, y=state.y - e)
        state = invest_step(state, min(w, state.y), model)
        if not (math.isfinite(state.x) and math.isfinite(state.S)):
            raise NumericalFailure(f"spiral state overflowed in round {j}")
        value = state.x * state.S
        if not math.isfinite(value):
            raise NumericalFailure(f"position value overflowed in round {j}")
        trace.records.append(
            RoundRecord(
                round=j,
                y_borrowed=y_new,
                w_invested=w,
                e_extracted=e,
                state=state,
                ltv=state.z / value if value > 0 else math.inf,
                alpha=alpha,
            )
        )
        if alpha_rule is not None:
            trace.alpha_path.append(alpha)
    return trace


def run_spiral(init: MarketState, params: SpiralParams, model: ImpactModel) -> SpiralTrace:
    """Iterate the borrow -> extract -> invest cycle for ``params.rounds`` rounds.

    The run ends early once borrow capacity drops below
    ``params.tol * x0 * S0`` or the lending pool is exhausted.
    """
    return _run(init, params, model)


def geometric_borrow_limit(alpha: float, x0: float, S0: float = 1.0) -> float:
    """Total cash borrowable without price impact, ``alpha/(1-alpha) * x0 * S0``."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0,1)")
    return alpha / (1.0 - alpha) * x0 * S0


@dataclass(frozen=True)
class ExtractionResult:
    epsilon_star: float
    total_extracted: float
    exceeds_initial: bool
    flag: str
    trace: Optional[SpiralTrace] = None


def sustains_growth(trace: SpiralTrace) -> bool:
    """Price rose strictly every round and capacity never ran out."""
    return trace.termination == "rounds_completed" and trace.price_monotonic


def max_sustainable_extraction(
    init: MarketState,
    params: SpiralParams,
    model: ImpactModel,
    target_rounds: int,
    resolution: float = 1e-4,
) -> ExtractionResult:
    """Largest extraction fraction that keeps the price rising strictly.

    Bisects ``epsilon`` on ``[0, 1]``; feasibility is judged by simulating
    ``target_rounds`` rounds. ``exceeds_initial`` reports whether the cash
    taken out beats the borrower's initial equity ``x0*S0 - z0``.
    """
    equity = init.x * init.S - init.z
    if model.k == 0:
        return ExtractionResult(0.0, 0.0, False, "no-impact")
    base = replace(params, rounds=target_rounds)

    def attempt(eps: float) -> SpiralTrace:
        return run_spiral(init, replace(base, epsilon=eps), model)

    t0 = attempt(0.0)
    if not sustains_growth(t0):
        return ExtractionResult(0.0, 0.0, False, "no-growth-at-zero", t0)
    t1 = attempt(1.0)
    if sustains_growth(t1):
        return ExtractionResult(1.0, t1.total_extracted, t1.total_extracted > equity, "all-feasible", t1)
    lo, hi, best = 0.0, 1.0, t0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        t = attempt(mid)
        if sustains_growth(t):
            lo, best = mid, t
        else:
            hi = mid
    total = best.total_extracted
    return ExtractionResult(lo, total, total > equity, "ok", best)


def write_trace_csv(trace: SpiralTrace, fh=None, include_alpha: bool | None = None) -> str:
    """Serialise a trace; returns the CSV text and writes it to ``fh`` if given."""
    if include_alpha is None:
        include_alpha = bool(trace.alpha_path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER + (["alpha_eff"] if include_alpha else []))
    for r in trace.records:
        row = [
            str(r.round),
            fmt(r.y_borrowed),
            fmt(r.w_invested),
            fmt(r.e_extracted),
            fmt(r.state.x),
            fmt(r.state.z),
            fmt(r.state.S),
            fmt(r.ltv),
        ]
        if include_alpha:
            row.append(fmt(r.alpha))
        writer.writerow(row)
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def recursion_residual(prev: MarketState, rec: RoundRecord, model: ImpactModel) -> float:
    """``|S_new - S_prev - f(w / S_new)|`` for one recorded round."""
    S_new = rec.state.S
    return abs(S_new - prev.S - eval_impact(model, rec.w_invested / S_new))
