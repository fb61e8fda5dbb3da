"""Continuum limit of the spiral: growth exponents, ODE integration, fits.

Two exponent pairs are exposed:

``closed_form_exponents``
    The Ansatz result ``m = a(1-g)/(a - g(1-a))``, ``n = (1-a)(1-g)/(a - g(1-a))``.

``recursion_exponents``
    The exponents obtained by substituting ``x ~ t^m``, ``S ~ t^n`` directly
    into the two continuum relations ``a(x S' + S x') = S x'`` and
    ``S' = khat (x')^g``, i.e. ``m/n = a/(1-a)`` and ``n - 1 = g (m - 1)``.
    This pair is what the discrete engine and ``integrate_ode`` follow. Both pairs
    share the ratio ``m/n = a/(1-a)`` and agree at ``a = 1/2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import NumericalFailure
from .spiral import SpiralTrace, fmt

SINGULAR_EPS = 1e-12
REPORT_HEADER = ["alpha", "gamma", "m_closed", "n_closed", "m_fit", "n_fit", "m_err", "n_err", "verdict"]


@dataclass(frozen=True)
class ExponentPair:
    m: Optional[float]
    n: Optional[float]
    denominator: float
    regime: str  # growth | singular | non-growth

    @property
    def valid(self) -> bool:
        return self.regime == "growth"


def _check(alpha: float, gamma: float) -> None:
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0,1)")
    if not (0 < gamma <= 1):
        raise ValueError("gamma must lie in (0,1]")


def closed_form_exponents(alpha: float, gamma: float) -> ExponentPair:
    """Ansatz exponents; singular when ``alpha == gamma / (1 + gamma)``."""
    _check(alpha, gamma)
    den = alpha - gamma * (1.0 - alpha)
    if abs(den) < SINGULAR_EPS:
        return ExponentPair(None, None, den, "singular")
    m = alpha * (1.0 - gamma) / den
    n = (1.0 - alpha) * (1.0 - gamma) / den
    return ExponentPair(m, n, den, "growth" if den > 0 else "non-growth")


def simplified_sqrt_exponents(alpha: float) -> tuple[float, float]:
    """``(m, n)`` at ``gamma = 1/2``: ``alpha/(3 alpha - 1)``, ``(1-alpha)/(3 alpha - 1)``."""
    den = 3.0 * alpha - 1.0
    return alpha / den, (1.0 - alpha) / den


@dataclass(frozen=True)
class RecursionExponents:
    m: Optional[float]
    n: Optional[float]
    denominator: float
    regime: str  # polynomial | exponential | explosive (or "static" for gamma == 1)


def recursion_exponents(alpha: float, gamma: float) -> RecursionExponents:
    """Power-law exponents of the borrow/convert recursion itself.

    Polynomial growth requires ``1 - alpha (1 + gamma) > 0``. At equality the
    recursion grows exponentially; beyond it growth outpaces any power law.
    """
    _check(alpha, gamma)
    den = 1.0 - alpha * (1.0 + gamma)
    if gamma == 1.0:
        return RecursionExponents(None, None, den, "static")
    if abs(den) < SINGULAR_EPS:
        return RecursionExponents(None, None, den, "exponential")
    if den < 0:
        return RecursionExponents(None, None, den, "explosive")
    return RecursionExponents(alpha * (1.0 - gamma) / den, (1.0 - alpha) * (1.0 - gamma) / den, den, "polynomial")


@dataclass(frozen=True)
class ContinuumParams:
    khat: float
    dt: float = 1e-3
    t0: float = 1.0
    t_max: float = 100.0
    x0: float = 1.0
    S0: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.t0 < 1:
            raise ValueError("t0 must be >= 1")
        if not self.t_max > self.t0:
            raise ValueError("t_max must exceed t0")
        if not (self.x0 > 0 and self.S0 > 0):
            raise ValueError("x0 and S0 must be > 0")
        if self.khat < 0:
            raise ValueError("khat must be >= 0")
        if not (0 < self.gamma < 1):
            raise ValueError("gamma must lie in (0,1) for the continuum system")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    S: np.ndarray


def continuum_rates(alpha: float, gamma: float, khat: float, x: float, S: float) -> tuple[float, float]:
    """Solve ``a(x S' + S x') = S x'`` and ``S' = khat x'^g`` for ``(x', S')``."""
    if khat == 0:
        return 0.0, 0.0
    dx = (khat * alpha * x / ((1.0 - alpha) * S)) ** (1.0 / (1.0 - gamma))
    return dx, khat * dx**gamma


def integrate_ode(alpha: float, params: ContinuumParams, store_every: int = 1) -> Trajectory:
    """Fixed-step explicit Euler integration of the continuum system."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0,1)")
    g, kh = params.gamma, params.khat
    steps = int(round((params.t_max - params.t0) / params.dt))
    dt = (params.t_max - params.t0) / steps
    x, S = params.x0, params.S0
    ts, xs, Ss = [params.t0], [x], [S]
    for i in range(1, steps + 1):
        dx, dS = continuum_rates(alpha, g, kh, x, S)
        x_new, S_new = x + dt * dx, S + dt * dS
        if not (math.isfinite(x_new) and math.isfinite(S_new)):
            raise NumericalFailure(f"continuum state became non-finite at t={params.t0 + i * dt:.6g}")
        x, S = x_new, S_new
        if i % store_every == 0 or i == steps:
            ts.append(params.t0 + i * dt)
            xs.append(x)
            Ss.append(S)
    return Trajectory(np.asarray(ts), np.asarray(xs), np.asarray(Ss))


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    npoints: int


def default_window(indices: Sequence[float]) -> tuple[float, float]:
    """Last decade of the available index range."""
    hi = float(np.max(indices))
    return hi / 10.0, hi


def fit_power_law_exponent(
    indices: Sequence[float],
    values: Sequence[float],
    window: tuple[float, float] | None = None,
) -> PowerLawFit:
    """OLS slope of ``log(value)`` against ``log(index)`` inside ``window`` (inclusive)."""
    idx = np.asarray(indices, dtype=float)
    val = np.asarray(values, dtype=float)
    if idx.shape != val.shape:
        raise ValueError("indices and values differ in length")
    if window is None:
        window = default_window(idx)
    lo, hi = window
    sel = (idx >= lo) & (idx <= hi)
    if sel.sum() < 10:
        raise ValueError(f"window {window} holds {int(sel.sum())} points; need >= 10")
    idx, val = idx[sel], val[sel]
    if np.any(idx <= 0):
        raise ValueError("indices must be > 0")
    if np.any(val <= 0) or not np.all(np.isfinite(val)):
        raise ValueError("values must be finite and > 0")
    lx = np.log(idx)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate window: all indices equal")
    res = stats.linregress(lx, np.log(val))
    return PowerLawFit(float(res.slope), float(res.stderr), int(sel.sum()))


@dataclass
class ComparisonReport:
    alpha: float
    gamma: float
    closed: ExponentPair
    recursion: RecursionExponents
    m_fit: Optional[float] = None
    n_fit: Optional[float] = None
    m_err: Optional[float] = None
    n_err: Optional[float] = None
    tolerance: float = 0.05
    verdict: str = "fail"
    notes: list[str] = field(default_factory=list)

    def csv_row(self) -> list[str]:
        def f(v):
            return "" if v is None else fmt(v)

        return [
            fmt(self.alpha),
            fmt(self.gamma),
            f(self.closed.m),
            f(self.closed.n),
            f(self.m_fit),
            f(self.n_fit),
            f(self.m_err),
            f(self.n_err),
            self.verdict,
        ]

    def text(self) -> str:
        lines = [
            f"alpha={self.alpha:.12g} gamma={self.gamma:.12g} regime={self.closed.regime}",
            f"closed form: m={_s(self.closed.m)} n={_s(self.closed.n)}",
            f"recursion:   m={_s(self.recursion.m)} n={_s(self.recursion.n)} ({self.recursion.regime})",
            f"fitted:      m={_s(self.m_fit)} n={_s(self.n_fit)}",
            f"rel. error:  m={_s(self.m_err)} n={_s(self.n_err)} (tolerance {self.tolerance:g})",
            f"verdict: {self.verdict}",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _s(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.12g}"


def _rel(fit: float, ref: float) -> float:
    return abs(fit - ref) / abs(ref)


def compare_discrete_continuum(
    trace: SpiralTrace,
    alpha: float,
    gamma: float,
    window: tuple[float, float] | None = None,
    tolerance: float = 0.05,
) -> ComparisonReport:
    """Fit the trace's ``x_j`` and ``S_j`` slopes and compare them with the closed form.

    Raises ``ValueError`` when the trace stops before the fit window ends.
    """
    closed = closed_form_exponents(alpha, gamma)
    rep = ComparisonReport(alpha, gamma, closed, recursion_exponents(alpha, gamma), tolerance=tolerance)
    if closed.regime == "singular":
        rep.verdict = "no-prediction"
        return rep
    rounds = trace.rounds()
    if window is None:
        window = (trace.params.rounds / 10.0, float(trace.params.rounds))
    if not rounds or rounds[-1] < window[1]:
        last = rounds[-1] if rounds else 0
        raise ValueError(
            f"trace ended at round {last} ({trace.termination}) before the fit window {window} closed"
        )
    n_hat = fit_power_law_exponent(rounds, trace.series("S"), window)
    m_hat = fit_power_law_exponent(rounds, trace.series("x"), window)
    rep.m_fit, rep.n_fit = m_hat.exponent, n_hat.exponent
    if closed.regime == "non-growth":
        rep.verdict = "non-growth"
        rep.notes.append("closed form predicts no growth here; fitted slopes are informational")
        return rep
    rep.m_err, rep.n_err = _rel(rep.m_fit, closed.m), _rel(rep.n_fit, closed.n)
    rep.verdict = "pass" if max(rep.m_err, rep.n_err) <= tolerance else "fail"
    return rep


def compare_ode_continuum(
    alpha: float, params: ContinuumParams, window: tuple[float, float] | None = None, tolerance: float = 0.05
) -> ComparisonReport:
    """Same report as ``compare_discrete_continuum`` but for an ODE trajectory."""
    gamma = params.gamma
    closed = closed_form_exponents(alpha, gamma)
    rep = ComparisonReport(alpha, gamma, closed, recursion_exponents(alpha, gamma), tolerance=tolerance)
    if closed.regime == "singular":
        rep.verdict = "no-prediction"
        return rep
    traj = integrate_ode(alpha, params)
    rep.m_fit = fit_power_law_exponent(traj.t, traj.x, window).exponent
    rep.n_fit = fit_power_law_exponent(traj.t, traj.S, window).exponent
    if closed.regime == "non-growth":
        rep.verdict = "non-growth"
        return rep
    rep.m_err, rep.n_err = _rel(rep.m_fit, closed.m), _rel(rep.n_fit, closed.n)
    rep.verdict = "pass" if max(rep.m_err, rep.n_err) <= tolerance else "fail"
    return rep


def richardson_check(alpha: float, params: ContinuumParams, window: tuple[float, float] | None = None) -> float:
    """Largest relative change of the fitted exponents when ``dt`` is halved."""
    out = []
    for p in (params, replace(params, dt=params.dt / 2)):
        tr = integrate_ode(alpha, p)
        out.append(
            (fit_power_law_exponent(tr.t, tr.x, window).exponent, fit_power_law_exponent(tr.t, tr.S, window).exponent)
        )
    (m1, n1), (m2, n2) = out
    return max(_rel(m1, m2), _rel(n1, n2))


def write_report_csv(reports: Sequence[ComparisonReport], fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
