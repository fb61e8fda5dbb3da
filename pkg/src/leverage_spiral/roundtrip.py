"""Roundtrip trading against a predictable impact regime.

Per cycle the trader buys ``N_r`` units while impact is high and sells them
back while it is low. The buy moves the price up by ``f_hi(N_r / volume)``
and the sell moves it down by ``f_lo(N_r / volume)``, so the held position
``N`` is marked up by the difference. The roundtripped block fills at the
post-impact prices, which costs ``S_buy - S_end = f_lo(...)`` per unit on
top of the exogenous friction ``c_unit``.

Booking it this way makes the cycle PnL exactly ``N * dS - N_r * dC``, the
quantity the viability test compares.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import NumericalFailure
from .impact import ImpactModel, eval_impact
from .spiral import fmt

CYCLE_HEADER = ["cycle", "dS_buy", "dS_sell", "dS_net", "cost", "mtm_gain", "pnl_cum"]


@dataclass(frozen=True)
class Viability:
    viable: bool
    margin: float

    def __bool__(self):
        return self.viable


def viability(N: float, N_r: float, dS: float, dC: float) -> Viability:
    """Roundtripping pays when the mark-up on the held position covers the cost."""
    margin = N * dS - N_r * dC
    return Viability(margin >= 0, margin)


@dataclass(frozen=True)
class RoundtripParams:
    N: float
    N_r: float
    model_hi: ImpactModel
    model_lo: ImpactModel
    c_unit: float = 0.0
    cycles: int = 1
    S0: float = 1.0
    volume_norm: float = 1.0
    short: bool = False
    temporary_impact: bool = True

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if not self.N_r > 0:
            raise ValueError("N_r must be > 0")
        if self.c_unit < 0:
            raise ValueError("c_unit must be >= 0")
        if self.model_hi.k < self.model_lo.k:
            raise ValueError("model_hi.k must be >= model_lo.k")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValueError("cycles must be a positive integer")
        if not (self.S0 > 0 and self.volume_norm > 0):
            raise ValueError("S0 and volume_norm must be > 0")


@dataclass(frozen=True)
class CycleRecord:
    cycle: int
    dS_buy: float
    dS_sell: float
    dS_net: float
    dC: float
    cost: float
    mtm_gain: float
    pnl_cum: float
    price: float


@dataclass
class RoundtripTrace:
    params: RoundtripParams
    cycles: list[CycleRecord] = field(default_factory=list)

    @property
    def pnl(self) -> float:
        return self.cycles[-1].pnl_cum if self.cycles else 0.0

    @property
    def total_cost(self) -> float:
        # Same summation order as the simulator's running total.
        total = 0.0
        for c in self.cycles:
            total += c.cost
        return total

    @property
    def mean_dS(self) -> float:
        return math.fsum(c.dS_net for c in self.cycles) / len(self.cycles)

    @property
    def mean_dC(self) -> float:
        return math.fsum(c.dC for c in self.cycles) / len(self.cycles)

    def viability(self) -> Viability:
        return viability(self.params.N, self.params.N_r, self.mean_dS, self.mean_dC)


def simulate_roundtrip(params: RoundtripParams) -> RoundtripTrace:
    """Run ``params.cycles`` roundtrips and accumulate mark-to-market and cost.

    With ``short=True`` the trader holds ``-N``, sells into high impact and
    buys back into low impact; the gains mirror the long case.
    """
    A = params.N_r / params.volume_norm
    sign = -1.0 if params.short else 1.0
    S = params.S0
    trace = RoundtripTrace(params)
    gains = costs = 0.0
    for c in range(1, params.cycles + 1):
        # Opening leg trades into the high-impact regime, closing leg into the low one.
        d_open = eval_impact(params.model_hi, A)
        d_close = eval_impact(params.model_lo, A)
        S_mid = S + sign * d_open
        S_end = S_mid - sign * d_close
        if not (S_mid > 0 and S_end > 0):
            raise NumericalFailure(f"price went non-positive in cycle {c}")
        dS_net = d_open - d_close
        shortfall = d_close if params.temporary_impact else 0.0
        dC = params.c_unit + shortfall
        cost = params.N_r * dC
        gain = params.N * dS_net
        # Separate running sums keep a zero mark-up from perturbing -cost.
        gains += gain
        costs += cost
        trace.cycles.append(CycleRecord(c, d_open, d_close, dS_net, dC, cost, gain, gains - costs, S_end))
        S = S_end
    return trace


def write_cycles_csv(trace: RoundtripTrace, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CYCLE_HEADER)
    for c in trace.cycles:
        w.writerow([c.cycle, fmt(c.dS_buy), fmt(c.dS_sell), fmt(c.dS_net), fmt(c.cost), fmt(c.mtm_gain), fmt(c.pnl_cum)])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
