"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (see conftest.py); the lines are
printed in an "acceptance criteria" section at the end of the run.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from leverage_spiral.cli import main
from leverage_spiral.continuum import closed_form_exponents, fit_power_law_exponent, simplified_sqrt_exponents
from leverage_spiral.errors import NumericalFailure
from leverage_spiral.haircut import HaircutPolicy, run_spiral_with_policy, stability_report
from leverage_spiral.impact import ImpactModel, eval_impact, solve_post_trade_price
from leverage_spiral.kelly import classify_regress
from leverage_spiral.roundtrip import RoundtripParams, simulate_roundtrip
from leverage_spiral.spiral import (
    MarketState,
    SpiralParams,
    max_sustainable_extraction,
    run_spiral,
    write_trace_csv,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SQRT = ImpactModel(0.1, 0.5)


def test_c1_geometric_limit(acceptance):
    t0 = time.perf_counter()
    tr = run_spiral(MarketState(100.0, S=1.0), SpiralParams(0.5, rounds=200), ImpactModel(0.0, 0.5))
    elapsed = time.perf_counter() - t0
    total = math.fsum(r.y_borrowed for r in tr.records if r.round <= 200)
    err = abs(total - 100.0) / 100.0
    acceptance("C1 geometric limit", err <= 1e-6 and elapsed < 1.0, f"total={total:.15g} rel_err={err:.2e} t={elapsed:.3f}s")


@pytest.mark.parametrize("alpha", [0.5, 2 / 3, 0.8], ids=["0.5", "2/3", "0.8"])
def test_c2_exponent_reproduction(acceptance, alpha):
    m, n = simplified_sqrt_exponents(alpha)
    label = f"C2 exponent reproduction alpha={alpha:.4g}"
    t0 = time.perf_counter()
    try:
        tr = run_spiral(MarketState(100.0), SpiralParams(alpha, rounds=10_000), SQRT)
    except NumericalFailure as exc:
        acceptance(label, False, f"simulation failed: {exc} (expected m={m:.4g} n={n:.4g})")
        return
    elapsed = time.perf_counter() - t0
    n_hat = fit_power_law_exponent(tr.rounds(), tr.series("S"), (1e3, 1e4)).exponent
    m_hat = fit_power_law_exponent(tr.rounds(), tr.series("x"), (1e3, 1e4)).exponent
    m_err, n_err = abs(m_hat - m) / m, abs(n_hat - n) / n
    ok = max(m_err, n_err) <= 0.05 and elapsed < 30
    acceptance(
        label,
        ok,
        f"m_fit={m_hat:.5g} (want {m:.5g}, err {m_err:.2%}) n_fit={n_hat:.5g} (want {n:.5g}, err {n_err:.2%}) t={elapsed:.2f}s",
    )


def test_c3_exponent_identities(acceptance):
    worst = 0.0
    count = 0
    for alpha in np.linspace(0.05, 0.95, 10):
        for gamma in np.linspace(0.05, 0.95, 20):
            p = closed_form_exponents(alpha, gamma)
            if p.regime != "growth":
                continue
            den = alpha - gamma * (1 - alpha)
            worst = max(
                worst,
                abs(p.m * den - alpha * (1 - gamma)),
                abs(p.n * den - (1 - alpha) * (1 - gamma)),
                abs(p.m / p.n - alpha / (1 - alpha)) / (alpha / (1 - alpha)),
            )
            count += 1
            if count == 100:
                break
        if count == 100:
            break
    acceptance("C3 exponent identities", count == 100 and worst <= 1e-12, f"grid={count} worst={worst:.2e}")


def test_c4_implicit_solver(acceptance):
    rng = np.random.default_rng(20240611)
    worst, worst_lin = 0.0, 0.0
    for _ in range(10_000):
        k = 10 ** rng.uniform(-4, 1)
        gamma = rng.uniform(0.05, 1.0)
        S = 10 ** rng.uniform(-3, 4)
        w = 10 ** rng.uniform(-6, 6)
        S_new = solve_post_trade_price(ImpactModel(k, gamma), S, w)
        worst = max(worst, abs(S_new - S - eval_impact(ImpactModel(k, gamma), w / S_new)) / S_new)
        lin = solve_post_trade_price(ImpactModel(k, 1.0), S, w)
        closed = 0.5 * (S + math.sqrt(S * S + 4 * k * w))
        worst_lin = max(worst_lin, abs(lin - closed) / closed)
    acceptance(
        "C4 implicit solver", worst <= 1e-12 and worst_lin <= 1e-9, f"max residual/S={worst:.2e} gamma=1 rel diff={worst_lin:.2e}"
    )


def test_c5_singular_boundary(acceptance):
    cases = [(1 / 3, 0.5), (0.5, 1.0), (0.2 / 1.2, 0.2), (0.9 / 1.9, 0.9)]
    results = [closed_form_exponents(a, g) for a, g in cases]
    ok = all(p.regime == "singular" and p.m is None and p.n is None for p in results)
    acceptance("C5 singular boundary", ok, ", ".join(p.regime for p in results))


def test_c6_extraction_fixture(acceptance, load_fixture):
    f = load_fixture("extraction.json")
    init = MarketState(f["x0"], z=f["z0"], S=f["S0"])
    res = max_sustainable_extraction(
        init, SpiralParams(f["alpha"]), ImpactModel(f["k"], f["gamma"]), f["target_rounds"], f["resolution"]
    )
    equity = f["x0"] * f["S0"] - f["z0"]
    S = [init.S] + res.trace.series("S")
    increasing = all(b > a for a, b in zip(S, S[1:])) and len(S) == f["target_rounds"] + 1
    matches = res.epsilon_star == f["expected"]["epsilon_star"] and math.isclose(
        res.total_extracted, f["expected"]["total_extracted"], rel_tol=1e-12
    )
    ok = res.total_extracted > equity and increasing and matches
    acceptance(
        "C6 extraction instability",
        ok,
        f"eps*={res.epsilon_star} extracted={res.total_extracted:.6g} > equity={equity:g}, strictly increasing={increasing}",
    )


def test_c7_roundtrip_sign(acceptance):
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        gamma = rng.uniform(0.1, 1.0)
        k_lo = rng.uniform(0, 0.5)
        p = RoundtripParams(
            N=rng.uniform(0, 1e4),
            N_r=10 ** rng.uniform(-3, 2),
            model_hi=ImpactModel(k_lo + rng.uniform(0, 0.5), gamma),
            model_lo=ImpactModel(k_lo, gamma),
            c_unit=rng.uniform(0, 0.1),
            cycles=int(rng.integers(1, 21)),
            S0=rng.uniform(50, 1000),
            volume_norm=10 ** rng.uniform(0, 3),
        )
        tr = simulate_roundtrip(p)
        if (tr.pnl >= 0) != tr.viability().viable:
            mismatches += 1
    sym = simulate_roundtrip(
        RoundtripParams(N=1000, N_r=10, model_hi=SQRT, model_lo=SQRT, c_unit=0.003, cycles=25)
    )
    null_exact = sym.pnl == -sym.total_cost
    acceptance("C7 roundtrip sign agreement", mismatches == 0 and null_exact, f"mismatches={mismatches}/1000 null exact={null_exact}")


def test_c8_policy_suppression(acceptance, load_fixture):
    f = load_fixture("policy.json")
    init = MarketState(f["x0"], S=f["S0"])
    params = SpiralParams(f["alpha_base"], rounds=f["rounds"])
    model = ImpactModel(f["k"], f["gamma"])
    static = run_spiral(init, params, model)
    base = stability_report(static)
    policy = HaircutPolicy(f["alpha_base"], f["beta_conc"], f["beta_liq"], f["liquidity_ref"])
    rep = stability_report(run_spiral_with_policy(init, params, policy, model))
    off = run_spiral_with_policy(init, params, HaircutPolicy(f["alpha_base"]), model)
    identical = write_trace_csv(off, include_alpha=False) == write_trace_csv(static)
    ok = base.classification == "divergent" and rep.classification == "bounded" and rep.slope < 0.05 and identical
    acceptance(
        "C8 policy suppression",
        ok,
        f"baseline={base.classification} (slope {base.slope:.3g}) policy={rep.classification} (slope {rep.slope:.3g}) off identical={identical}",
    )


def test_c9_kelly_classifier(acceptance):
    expected = {0.5: "Convergent", 2.0: "Divergent", -1.0: "Oscillatory"}
    series = {r: [r**i for i in range(40)] for r in expected}
    exact = all(
        classify_regress(s).label == expected[r] and classify_regress(s).estimated_ratio == r for r, s in series.items()
    )
    rng = np.random.default_rng(9)
    invariant = True
    for c in 10 ** rng.uniform(-8, 8, size=100):
        for r, s in series.items():
            if classify_regress([c * v for v in s]).label != expected[r]:
                invariant = False
    acceptance("C9 Kelly classifier", exact and invariant, f"exact={exact} scale-invariant over 100 scalings={invariant}")


def test_c10_determinism(acceptance, tmp_path):
    names = sorted(p.name for p in SCENARIOS.glob("*.ini"))
    differing = []
    for name in names:
        outs = []
        for run in ("a", "b"):
            prefix = tmp_path / run / Path(name).stem
            assert main(["run", str(SCENARIOS / name), "--out", str(prefix), "--threads", "2"]) == 0
            outs.append(prefix)
        a_files = sorted(p for p in outs[0].parent.glob(f"{outs[0].name}_*") if not p.name.endswith("_meta.json"))
        for pa in a_files:
            pb = outs[1].parent / pa.name
            if pa.read_bytes() != pb.read_bytes():
                differing.append(pa.name)
    acceptance("C10 determinism", not differing, f"{len(names)} scenario files; differing={differing or 'none'}")
