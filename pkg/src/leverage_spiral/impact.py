"""Permanent power-law price impact and the implicit post-trade price.

A purchase of ``w`` cash moves the price from ``S_prev`` to the ``S_new``
at which the order fills, so the impact argument (units bought) itself
depends on the new price::

    S_new = S_prev + k * (w / S_new) ** gamma

``g(S) = S - S_prev - k (w/S)^gamma`` is strictly increasing on
``(S_prev, inf)``, non-positive at ``S_prev`` and non-negative at
``S_prev + k (w/S_prev)^gamma``, so bisection on that bracket always converges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import SolverError

MAX_ITER = 200
RTOL = 1e-12


@dataclass(frozen=True)
class ImpactModel:
    """Impact law ``f(A) = k * A**gamma``."""

    k: float
    gamma: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k >= 0):
            raise ValueError("k must be finite and >= 0")
        if not (0 < self.gamma <= 1):
            raise ValueError("gamma must lie in (0,1]")


def eval_impact(model: ImpactModel, A: float) -> float:
    """Price change caused by trading the volume fraction ``A``."""
    if A < 0:
        raise ValueError(f"volume fraction must be >= 0, got {A!r}")
    if A == 0 or model.k == 0:
        return 0.0
    return model.k * A**model.gamma


def solve_post_trade_price(
    model: ImpactModel,
    S_prev: float,
    w: float,
    tol: float | None = None,
) -> float:
    """Return the fill price after spending ``w`` cash on the risky asset.

    ``tol`` bounds the residual ``|S - S_prev - f(w/S)|``. Without it the
    bound is relative to the returned price, ``1e-12 * S``.
    """
    if not S_prev > 0:
        raise ValueError("S_prev must be > 0")
    if w < 0:
        raise ValueError("w must be >= 0")
    if tol is not None and not tol > 0:
        raise ValueError("tol must be > 0")

    def ok(S: float, r: float) -> bool:
        return abs(r) <= (RTOL * S if tol is None else tol)

    if w == 0 or model.k == 0:
        return S_prev

    k, gamma = model.k, model.gamma

    def g(S: float) -> float:
        return S - S_prev - k * (w / S) ** gamma

    lo = S_prev
    hi = S_prev + eval_impact(model, w / S_prev)
    if not math.isfinite(hi):
        raise SolverError("impact bracket is not finite", math.inf)
    if gamma == 1.0:
        # Closed form is cheap; polish it with bisection below only on failure.
        root = 0.5 * (S_prev + math.sqrt(S_prev * S_prev + 4.0 * k * w))
        root = min(max(root, math.nextafter(S_prev, math.inf)), hi)
        if root > S_prev and ok(root, g(root)):
            return root

    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket collapsed to adjacent floats
        residual = g(mid)
        if ok(mid, residual):
            return mid
        if residual < 0:
            lo = mid
        else:
            hi = mid
    # Collapsed bracket: take whichever endpoint has the smaller residual.
    best = min((lo, hi), key=lambda s: abs(g(s)))
    residual = g(best)
    if ok(best, residual):
        return best
    raise SolverError("post-trade price did not converge", abs(residual))
