"""Scenario files: parsing, validation, dispatch and parameter sweeps.

A scenario is an INI-style document with a ``[scenario]`` section and an
optional ``[sweep]`` section::

    [scenario]
    command = spiral
    alpha = 0.5
    gamma = 0.5
    k = 0.1
    rounds = 1000

    [sweep]
    param = alpha
    values = 0.4, 0.5, 2/3, 0.8

Keys inside ``[sweep]`` are equivalent to ``sweep.<key>`` in ``[scenario]``.
Numbers accept fractions such as ``2/3``. Unknown keys are errors.
"""

from __future__ import annotations

import configparser
import csv
import io
import itertools
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from .continuum import (
    ComparisonReport,
    ContinuumParams,
    closed_form_exponents,
    compare_discrete_continuum,
    compare_ode_continuum,
    recursion_exponents,
    write_report_csv,
)
from .errors import ValidationError
from .haircut import HaircutPolicy, run_spiral_with_policy, stability_report
from .impact import ImpactModel
from .kelly import KellyParams, classify_regress, simulate_regress, write_series_csv
from .roundtrip import RoundtripParams, simulate_roundtrip, write_cycles_csv
from .spiral import (
    MarketState,
    SpiralParams,
    fmt,
    max_sustainable_extraction,
    run_spiral,
    write_trace_csv,
)

COMMANDS = ("spiral", "exponents", "kelly", "roundtrip", "policy", "sweep")
SWEEP_TARGETS = ("spiral", "exponents", "kelly", "roundtrip", "policy")

NUMERIC_KEYS = {
    "alpha", "gamma", "k", "khat", "epsilon", "rounds", "rate", "pool_cap", "x0", "S0", "z0",
    "mu", "r", "sigma", "V0", "N", "N_r", "k_hi", "k_lo", "c_unit", "cycles",
    "alpha_base", "beta_conc", "beta_liq", "liquidity_ref",
    "volume_norm", "max_steps", "ratio_window", "dt", "t_max", "target_rounds", "fit_from", "fit_to",
}
INT_KEYS = {"rounds", "cycles", "max_steps", "ratio_window", "target_rounds"}
BOOL_KEYS = {"short"}
SWEEP_KEYS = {"sweep.param", "sweep.from", "sweep.to", "sweep.step", "sweep.values", "sweep.target"}
KNOWN_KEYS = {"command", "out"} | NUMERIC_KEYS | BOOL_KEYS | SWEEP_KEYS


class ScenarioError(ValidationError):
    """Parse or validation failure, with a location when one is known."""


@dataclass(frozen=True)
class SweepAxis:
    param: str
    values: tuple[float, ...]


@dataclass
class Scenario:
    command: str
    values: dict[str, Any] = field(default_factory=dict)
    axes: list[SweepAxis] = field(default_factory=list)
    target: str = "spiral"
    out: Optional[str] = None

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)


# ---------------------------------------------------------------- parsing


def _line_of(text: str, key: str) -> Optional[int]:
    short = key.split(".", 1)[1] if key.startswith("sweep.") else key
    pat = re.compile(rf"^\s*({re.escape(key)}|{re.escape(short)})\s*[=:]")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _where(text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"line {line}: " if line else ""


def _number(raw: str) -> Fraction:
    try:
        return Fraction(raw.strip())
    except (ValueError, ZeroDivisionError):
        return Fraction(float(raw))  # exponent notation such as 1e4


def _convert(key: str, raw: str, text: str) -> Any:
    try:
        if key in BOOL_KEYS:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key in NUMERIC_KEYS:
            q = _number(raw)
            if key in INT_KEYS:
                if q.denominator != 1:
                    raise ValueError(raw)
                return int(q)
            return float(q)
    except (ValueError, OverflowError):
        raise ScenarioError(f"{_where(text, key)}key '{key}': cannot parse value {raw!r}") from None
    return raw.strip()


def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in re.split(r"[,\s]+", raw.strip()) if p.strip()]


def _axes(raw: dict[str, str], text: str) -> list[SweepAxis]:
    if "sweep.param" not in raw:
        raise ScenarioError("sweep scenario needs sweep.param")
    params = _split_list(raw["sweep.param"])
    if not params:
        raise ScenarioError(f"{_where(text, 'sweep.param')}sweep axis list is empty")
    if len(params) > 2:
        raise ScenarioError(f"{_where(text, 'sweep.param')}at most 2 sweep axes are supported")
    for p in params:
        if p not in NUMERIC_KEYS:
            raise ScenarioError(f"{_where(text, 'sweep.param')}cannot sweep non-numeric key '{p}'")
    axes: list[list[Fraction]] = []
    if "sweep.values" in raw:
        groups = [g for g in raw["sweep.values"].split(";")]
        if len(groups) != len(params):
            raise ScenarioError(f"{_where(text, 'sweep.values')}need one ';'-separated value group per axis")
        for g in groups:
            try:
                axes.append([_number(v) for v in _split_list(g)])
            except ValueError:
                raise ScenarioError(f"{_where(text, 'sweep.values')}cannot parse sweep values {g!r}") from None
    else:
        try:
            lists = [[_number(v) for v in _split_list(raw.get(f"sweep.{k}", ""))] for k in ("from", "to", "step")]
        except ValueError:
            raise ScenarioError(f"{_where(text, 'sweep.from')}cannot parse sweep range") from None
        if any(len(lst) != len(params) for lst in lists):
            raise ScenarioError("sweep.from, sweep.to and sweep.step need one entry per axis")
        for lo, hi, step in zip(*lists):
            if step <= 0:
                raise ScenarioError(f"{_where(text, 'sweep.step')}sweep.step must be > 0")
            vals = []
            v = lo
            while v <= hi:
                vals.append(v)
                v += step
            axes.append(vals)
    out = []
    for p, vals in zip(params, axes):
        if not vals:
            raise ScenarioError(f"sweep axis '{p}' is empty")
        if p in INT_KEYS and any(v.denominator != 1 for v in vals):
            raise ScenarioError(f"sweep axis '{p}' must take integer values")
        out.append(SweepAxis(p, tuple(int(v) if p in INT_KEYS else float(v) for v in vals)))
    return out


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    body = text
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    if not first.startswith("["):
        body = "[scenario]\n" + text
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(body)
    except configparser.Error as exc:
        raise ScenarioError(f"parse error: {exc}") from None

    raw: dict[str, str] = {}
    for section in cp.sections():
        if section not in ("scenario", "sweep"):
            raise ScenarioError(f"unknown section [{section}]")
        for key, value in cp.items(section):
            full = f"sweep.{key}" if section == "sweep" else key
            if full not in KNOWN_KEYS:
                raise ScenarioError(f"{_where(text, key)}unknown key '{key}'")
            if full in raw:
                raise ScenarioError(f"{_where(text, key)}duplicate key '{full}'")
            raw[full] = value

    command = raw.get("command", "").strip()
    if command not in COMMANDS:
        raise ScenarioError(f"{_where(text, 'command')}command must be one of {', '.join(COMMANDS)}; got {command!r}")
    values = {k: _convert(k, v, text) for k, v in raw.items() if k not in SWEEP_KEYS and k not in ("command", "out")}
    scn = Scenario(command=command, values=values, out=raw.get("out"))
    if command == "sweep":
        scn.target = raw.get("sweep.target", "spiral").strip()
        if scn.target not in SWEEP_TARGETS:
            raise ScenarioError(f"sweep.target must be one of {', '.join(SWEEP_TARGETS)}")
        scn.axes = _axes(raw, text)
    elif any(k.startswith("sweep.") for k in raw):
        raise ScenarioError("sweep.* keys are only valid with command = sweep")
    validate(scn)
    return scn


# ------------------------------------------------------------- builders


def _req(values: dict, key: str, command: str) -> Any:
    if key not in values:
        raise ValidationError(f"command '{command}' needs key '{key}'")
    return values[key]


def _wrap(fn: Callable[[dict], Any], values: dict) -> Any:
    try:
        return fn(values)
    except ValidationError:
        raise
    except (ValueError, TypeError) as exc:
        raise ValidationError(str(exc)) from None


def build_spiral(v: dict):
    init = MarketState(x=v.get("x0", 100.0), y=0.0, z=v.get("z0", 0.0), S=v.get("S0", 1.0))
    params = SpiralParams(
        alpha=_req(v, "alpha", "spiral"),
        epsilon=v.get("epsilon", 0.0),
        rounds=v.get("rounds", 1000),
        rate_per_round=v.get("rate", 0.0),
        pool_cap=v.get("pool_cap"),
    )
    model = ImpactModel(k=v.get("k", 0.1), gamma=v.get("gamma", 0.5))
    return init, params, model


def build_policy(v: dict):
    alpha_base = v.get("alpha_base", v.get("alpha"))
    if alpha_base is None:
        raise ValidationError("command 'policy' needs key 'alpha_base'")
    init, params, model = build_spiral({**v, "alpha": alpha_base})
    policy = HaircutPolicy(
        alpha_base=alpha_base,
        beta_conc=v.get("beta_conc", 0.0),
        beta_liq=v.get("beta_liq", 0.0),
        liquidity_ref=v.get("liquidity_ref", 1.0),
    )
    return init, params, policy, model


def build_kelly(v: dict) -> KellyParams:
    return KellyParams(
        mu=_req(v, "mu", "kelly"),
        r=_req(v, "r", "kelly"),
        sigma=_req(v, "sigma", "kelly"),
        model=ImpactModel(k=v.get("k", 0.1), gamma=v.get("gamma", 0.5)),
        V0=v.get("V0", 1.0),
        S0=v.get("S0", 1.0),
        max_steps=v.get("max_steps", 200),
        ratio_window=v.get("ratio_window", 20),
    )


def build_roundtrip(v: dict) -> RoundtripParams:
    gamma = v.get("gamma", 0.5)
    return RoundtripParams(
        N=_req(v, "N", "roundtrip"),
        N_r=_req(v, "N_r", "roundtrip"),
        model_hi=ImpactModel(_req(v, "k_hi", "roundtrip"), gamma),
        model_lo=ImpactModel(_req(v, "k_lo", "roundtrip"), gamma),
        c_unit=v.get("c_unit", 0.0),
        cycles=v.get("cycles", 1),
        S0=v.get("S0", 1.0),
        volume_norm=v.get("volume_norm", 1.0),
        short=v.get("short", False),
    )


def build_exponents(v: dict):
    alpha, gamma = _req(v, "alpha", "exponents"), v.get("gamma", 0.5)
    closed = closed_form_exponents(alpha, gamma)
    cparams = None
    if "khat" in v:
        cparams = ContinuumParams(
            khat=v["khat"],
            dt=v.get("dt", 1e-3),
            t_max=v.get("t_max", 100.0),
            x0=v.get("x0", 1.0),
            S0=v.get("S0", 1.0),
            gamma=gamma,
        )
    return alpha, gamma, closed, cparams


BUILDERS = {
    "spiral": build_spiral,
    "policy": build_policy,
    "kelly": build_kelly,
    "roundtrip": build_roundtrip,
    "exponents": build_exponents,
}


def validate(scn: Scenario) -> None:
    """Build every concrete parameter block so bad values fail before any run."""
    target = scn.target if scn.command == "sweep" else scn.command
    cells = [scn.values]
    if scn.command == "sweep":
        grid = itertools.product(*(a.values for a in scn.axes))
        cells = [{**scn.values, **{a.param: v for a, v in zip(scn.axes, combo)}} for combo in grid]
    try:
        for v in cells:
            _wrap(BUILDERS[target], v)
    except ValidationError as exc:
        raise ScenarioError(str(exc)) from None


# -------------------------------------------------------------- running


@dataclass
class RunResult:
    files: dict[str, str]  # output suffix -> file contents
    summary: str


def _window(v: dict, rounds: float) -> tuple[float, float]:
    return (v.get("fit_from", rounds / 10.0), v.get("fit_to", float(rounds)))


def run_spiral_cmd(v: dict, tol: float = 0.05) -> RunResult:
    init, params, model = build_spiral(v)
    trace = run_spiral(init, params, model)
    files = {"trace.csv": write_trace_csv(trace)}
    lines = _spiral_summary(trace)
    try:
        rep = compare_discrete_continuum(trace, params.alpha, model.gamma, _window(v, params.rounds), tol)
        files["exponents.csv"] = write_report_csv([rep])
        lines.append(rep.text())
    except ValueError as exc:
        lines.append(f"exponent comparison skipped: {exc}")
    if "target_rounds" in v:
        res = max_sustainable_extraction(init, params, model, v["target_rounds"])
        lines += [
            f"epsilon_star={fmt(res.epsilon_star)}",
            f"extracted_at_epsilon_star={fmt(res.total_extracted)}",
            f"exceeds_initial_equity={res.exceeds_initial}",
            f"extraction_flag={res.flag}",
        ]
    return RunResult(files, "\n".join(lines) + "\n")


def _spiral_summary(trace) -> list[str]:
    fs = trace.final_state
    return [
        f"rounds_recorded={len(trace.records)}",
        f"termination={trace.termination}",
        f"total_borrowed={fmt(trace.total_borrowed)}",
        f"total_invested={fmt(trace.total_invested)}",
        f"total_extracted={fmt(trace.total_extracted)}",
        f"final_x={fmt(fs.x)} final_z={fmt(fs.z)} final_S={fmt(fs.S)}",
        f"price_monotonic={trace.price_monotonic}",
    ]


def run_policy_cmd(v: dict, tol: float = 0.05) -> RunResult:
    init, params, policy, model = build_policy(v)
    trace = run_spiral_with_policy(init, params, policy, model)
    rep = stability_report(trace)
    lines = _spiral_summary(trace) + [f"stability={rep.classification}", f"stability_reason={rep.reason}"]
    return RunResult({"trace.csv": write_trace_csv(trace)}, "\n".join(lines) + "\n")


def run_kelly_cmd(v: dict, tol: float = 0.05) -> RunResult:
    params = build_kelly(v)
    series = simulate_regress(params)
    cls = classify_regress(series, params.ratio_window)
    lines = [
        f"kelly_fraction={fmt(params.phi)}",
        f"steps={len(series)}",
        f"termination={series.termination}",
        f"label={cls.label}",
        f"estimated_ratio={fmt(cls.estimated_ratio)}",
        "note=sell-side impact uses the buy-side law with negative sign",
    ]
    return RunResult({"series.csv": write_series_csv(series)}, "\n".join(lines) + "\n")


def run_roundtrip_cmd(v: dict, tol: float = 0.05) -> RunResult:
    params = build_roundtrip(v)
    trace = simulate_roundtrip(params)
    via = trace.viability()
    lines = [
        f"pnl={fmt(trace.pnl)}",
        f"total_cost={fmt(trace.total_cost)}",
        f"mean_dS={fmt(trace.mean_dS)} mean_dC={fmt(trace.mean_dC)}",
        f"viable={via.viable} margin={fmt(via.margin)}",
    ]
    return RunResult({"cycles.csv": write_cycles_csv(trace)}, "\n".join(lines) + "\n")


def run_exponents_cmd(v: dict, tol: float = 0.05) -> RunResult:
    alpha, gamma, closed, cparams = build_exponents(v)
    if cparams is None:
        rep = ComparisonReport(alpha, gamma, closed, recursion_exponents(alpha, gamma), tolerance=tol)
        rep.verdict = "no-prediction" if closed.regime == "singular" else "closed-form-only"
    else:
        window = (v["fit_from"], v.get("fit_to", cparams.t_max)) if "fit_from" in v else None
        rep = compare_ode_continuum(alpha, cparams, window, tol)
    return RunResult({"exponents.csv": write_report_csv([rep])}, rep.text())


RUNNERS = {
    "spiral": run_spiral_cmd,
    "policy": run_policy_cmd,
    "kelly": run_kelly_cmd,
    "roundtrip": run_roundtrip_cmd,
    "exponents": run_exponents_cmd,
}


# ---------------------------------------------------------------- sweeps

CELL_COLUMNS = {
    "spiral": ["regime", "m_closed", "n_closed", "m_recursion", "n_recursion", "m_fit", "n_fit", "m_err", "n_err",
               "verdict", "total_borrowed", "total_extracted", "final_S", "termination"],
    "policy": ["total_borrowed", "final_S", "termination", "stability", "slope"],
    "kelly": ["kelly_fraction", "steps", "termination", "label", "estimated_ratio"],
    "roundtrip": ["pnl", "total_cost", "margin", "viable"],
    "exponents": ["regime", "m_closed", "n_closed", "m_recursion", "n_recursion", "recursion_regime"],
}


def _cell(target: str, v: dict, tol: float) -> dict[str, Any]:
    if target == "spiral":
        init, params, model = build_spiral(v)
        closed = closed_form_exponents(params.alpha, model.gamma)
        rec = recursion_exponents(params.alpha, model.gamma)
        row: dict[str, Any] = {"regime": closed.regime, "m_closed": closed.m, "n_closed": closed.n,
                               "m_recursion": rec.m, "n_recursion": rec.n}
        trace = run_spiral(init, params, model)
        row.update(
            total_borrowed=trace.total_borrowed,
            total_extracted=trace.total_extracted,
            final_S=trace.final_state.S,
            termination=trace.termination,
        )
        rep = compare_discrete_continuum(trace, params.alpha, model.gamma, _window(v, params.rounds), tol)
        row.update(m_fit=rep.m_fit, n_fit=rep.n_fit, m_err=rep.m_err, n_err=rep.n_err, verdict=rep.verdict)
        return row
    if target == "policy":
        init, params, policy, model = build_policy(v)
        trace = run_spiral_with_policy(init, params, policy, model)
        rep = stability_report(trace)
        return {
            "total_borrowed": trace.total_borrowed,
            "final_S": trace.final_state.S,
            "termination": trace.termination,
            "stability": rep.classification,
            "slope": rep.slope,
        }
    if target == "kelly":
        params = build_kelly(v)
        series = simulate_regress(params)
        cls = classify_regress(series, params.ratio_window)
        return {
            "kelly_fraction": params.phi,
            "steps": len(series),
            "termination": series.termination,
            "label": cls.label,
            "estimated_ratio": cls.estimated_ratio,
        }
    if target == "roundtrip":
        trace = simulate_roundtrip(build_roundtrip(v))
        via = trace.viability()
        return {"pnl": trace.pnl, "total_cost": trace.total_cost, "margin": via.margin, "viable": via.viable}
    alpha, gamma, closed, _ = build_exponents(v)
    rec = recursion_exponents(alpha, gamma)
    return {
        "regime": closed.regime,
        "m_closed": closed.m,
        "n_closed": closed.n,
        "m_recursion": rec.m,
        "n_recursion": rec.n,
        "recursion_regime": rec.regime,
    }


def _cell_safe(target: str, v: dict, tol: float) -> dict[str, Any]:
    try:
        return _cell(target, v, tol)
    except (ValueError, ArithmeticError) as exc:
        kind = "numeric" if isinstance(exc, ArithmeticError) else "invalid"
        return {"error": f"{kind}: {exc}"}


def _cell_str(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return fmt(v)
    return str(v).replace("\n", " ")


def run_sweep(scn: Scenario, tol: float = 0.05, threads: int = 1) -> list[dict[str, Any]]:
    """Evaluate every cell of the sweep grid; failures land in the row's ``error``."""
    if scn.command != "sweep":
        raise ValidationError("run_sweep needs a sweep scenario")
    if not scn.axes or any(not a.values for a in scn.axes):
        raise ValidationError("sweep axes must be nonempty")
    if len(scn.axes) > 2:
        raise ValidationError("at most 2 sweep axes are supported")
    grid = list(itertools.product(*(a.values for a in scn.axes)))
    cells = [{**scn.values, **{a.param: val for a, val in zip(scn.axes, combo)}} for combo in grid]

    def job(v: dict) -> dict[str, Any]:
        return _cell_safe(scn.target, v, tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, cells))
    else:
        results = [job(c) for c in cells]
    rows = []
    for combo, res in zip(grid, results):
        row = {a.param: val for a, val in zip(scn.axes, combo)}
        row.update(res)
        rows.append(row)
    order = [a.param for a in scn.axes]
    rows.sort(key=lambda r: tuple(r[p] for p in order))
    return rows


def sweep_csv(scn: Scenario, rows: list[dict[str, Any]]) -> str:
    cols = [a.param for a in scn.axes] + CELL_COLUMNS[scn.target] + ["error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell_str(r.get(c)) for c in cols])
    return buf.getvalue()


def run_scenario(scn: Scenario, tol: float = 0.05, threads: int = 1) -> RunResult:
    """Execute a validated scenario and return the data files it produces."""
    if scn.command == "sweep":
        rows = run_sweep(scn, tol, threads)
        failed = sum(1 for r in rows if r.get("error"))
        summary = f"cells={len(rows)}\nfailed_cells={failed}\n"
        return RunResult({"sweep.csv": sweep_csv(scn, rows)}, summary)
    return _wrap(lambda v: RUNNERS[scn.command](v, tol), scn.values)
