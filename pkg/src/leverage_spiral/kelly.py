"""Kelly rebalancing under price impact and classification of the regress.

Reconstruction of the rebalancing loop (the classifier is the contract,
this loop only needs to exhibit the three behaviours):

* target holding ``phi * V / S`` with ``phi = (mu - r) / sigma**2`` and
  ``V = x S + cash`` at current marks;
* the adjustment ``a = target - x`` fills at the pre-trade price ``S``;
  the permanent impact then moves the mark. Buys move it through the implicit
  solve with notional ``a * S``, sells move it down by ``k |a|^gamma``
  evaluated at the pre-trade price;
* revalue and repeat.

Holding ``x_{i+1}`` after trade ``i`` then needs the follow-up
``a_{i+1} = (phi - 1) x_{i+1} dS_i / S_{i+1}``. ``phi > 1`` chases its own
impact upward, ``phi < 1`` alternates (and for ``gamma < 1`` stops shrinking,
the Grandi-type case), ``gamma = 1`` gives a constant ratio
``(phi - 1) k x / S``. ``phi = 1`` is self-consistent after one trade.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from .impact import ImpactModel, eval_impact, solve_post_trade_price
from .spiral import fmt

OVERFLOW = 1e100
LABELS = ("Convergent", "Divergent", "Oscillatory", "Undetermined")


def kelly_fraction(mu: float, r: float, sigma: float) -> float:
    """Growth-optimal risky fraction ``(mu - r) / sigma**2``."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    return (mu - r) / sigma**2


@dataclass(frozen=True)
class KellyParams:
    mu: float
    r: float
    sigma: float
    model: ImpactModel
    V0: float = 1.0
    S0: float = 1.0
    max_steps: int = 200
    ratio_window: int = 20

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not (self.V0 > 0 and self.S0 > 0):
            raise ValueError("V0 and S0 must be > 0")
        if not (self.max_steps >= self.ratio_window >= 4):
            raise ValueError("need max_steps >= ratio_window >= 4")

    @property
    def phi(self) -> float:
        return kelly_fraction(self.mu, self.r, self.sigma)


@dataclass
class RegressSeries:
    trades: list[float] = field(default_factory=list)
    prices: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    termination: str = "max_steps"  # max_steps | underflow | no_trade | overflow | collapse

    def __len__(self):
        return len(self.trades)

    def partial_sums(self) -> list[float]:
        out, total = [], 0.0
        for a in self.trades:
            total += a
            out.append(total)
        return out


def simulate_regress(params: KellyParams) -> RegressSeries:
    """Run the rebalancing loop and return the signed adjustment series."""
    phi = params.phi
    model = params.model
    S, x, cash = params.S0, 0.0, params.V0
    floor = 1e-15 * params.V0 / params.S0
    out = RegressSeries()
    for _ in range(params.max_steps):
        V = x * S + cash
        a = phi * V / S - x
        if not out.trades and a == 0:
            out.trades.append(0.0)
            out.prices.append(S)
            out.values.append(V)
            out.termination = "no_trade"
            return out
        if abs(a) <= floor:
            out.termination = "underflow"
            return out
        if a > 0:
            S_new = solve_post_trade_price(model, S, a * S)
        else:
            S_new = S - eval_impact(model, -a)
            if not S_new > 0:
                out.termination = "collapse"
                return out
        x += a
        cash -= a * S
        S = S_new
        out.trades.append(a)
        out.prices.append(S)
        out.values.append(x * S + cash)
        if max(abs(a), abs(x), abs(cash), S) > OVERFLOW or not math.isfinite(S):
            out.termination = "overflow"
            return out
    return out


@dataclass(frozen=True)
class RegressClass:
    label: str
    estimated_ratio: float


def classify_regress(series: Sequence[float] | RegressSeries, window: int = 20, delta: float = 0.05) -> RegressClass:
    """Classify an adjustment series by the median trailing ratio ``a_{i+1}/a_i``."""
    if isinstance(series, RegressSeries):
        terminated = series.termination in ("underflow", "no_trade")
        overflow = series.termination in ("overflow", "collapse")
        terms = list(series.trades)
    else:
        terminated = overflow = False
        terms = [float(a) for a in series]
    # Trailing zeros mean the adjustments have died out.
    while terms and terms[-1] == 0:
        terms.pop()
        terminated = True
    if terminated and len(terms) < 2:
        return RegressClass("Convergent", 0.0)

    tail = terms[-window:]
    ratios = [b / a for a, b in zip(tail, tail[1:]) if a != 0]
    if not ratios:
        return RegressClass("Convergent" if terminated else "Undetermined", 0.0)
    rho = float(statistics.median(ratios))
    if terminated:
        return RegressClass("Convergent", rho)
    if len(terms) < window and not overflow:
        return RegressClass("Undetermined", rho)
    if abs(rho) < 1 - delta:
        label = "Convergent"
    elif rho > 1 + delta:
        label = "Divergent"
    elif rho < -(1 - delta):
        label = "Oscillatory"
    else:
        label = "Undetermined"
    if overflow and label in ("Undetermined", "Convergent"):
        # Blew through the guard before the ratio settled.
        label = "Divergent"
    return RegressClass(label, rho)


def write_series_csv(series: RegressSeries, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "trade_units", "price", "portfolio_value"])
    for i, (a, S, V) in enumerate(zip(series.trades, series.prices, series.values)):
        w.writerow([i, fmt(a), fmt(S), fmt(V)])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
