import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leverage_spiral.haircut import (
    HaircutPolicy,
    effective_alpha,
    run_spiral_with_policy,
    stability_report,
)
from leverage_spiral.impact import ImpactModel
from leverage_spiral.spiral import MarketState, SpiralParams, run_spiral, write_trace_csv

SQRT = ImpactModel(0.1, 0.5)


def test_effective_alpha_examples():
    assert effective_alpha(HaircutPolicy(0.5), 1e6, 3.0) == 0.5
    assert effective_alpha(HaircutPolicy(0.5, beta_conc=1.0), 7.0, 7.0) == pytest.approx(0.25)
    assert effective_alpha(HaircutPolicy(0.5, beta_conc=1.0), 1e300, 1.0) < 1e-299


def test_liquidity_scarcity_term():
    p = HaircutPolicy(0.6, beta_liq=2.0, liquidity_ref=10.0)
    assert effective_alpha(p, 0.0, 20.0) == 0.6  # ample liquidity costs nothing
    assert effective_alpha(p, 0.0, 5.0) == pytest.approx(0.6 / 3.0)


@pytest.mark.parametrize(
    "kw", [dict(alpha_base=0.0), dict(alpha_base=1.0), dict(beta_conc=-1.0), dict(beta_liq=-1.0), dict(liquidity_ref=0.0)]
)
def test_policy_validated(kw):
    with pytest.raises(ValueError):
        HaircutPolicy(**{"alpha_base": 0.5, **kw})


def test_effective_alpha_rejects_bad_state():
    with pytest.raises(ValueError):
        effective_alpha(HaircutPolicy(0.5), 1.0, 0.0)
    with pytest.raises(ValueError):
        effective_alpha(HaircutPolicy(0.5), -1.0, 1.0)


nonneg = st.floats(0, 1e6)
positive = st.floats(1e-6, 1e6)


@given(
    base=st.floats(0.01, 0.99),
    bc=st.floats(0, 100),
    bl=st.floats(0, 100),
    ref=positive,
    B1=nonneg,
    B2=nonneg,
    L1=positive,
    L2=positive,
)
def test_effective_alpha_range_and_monotonicity(base, bc, bl, ref, B1, B2, L1, L2):
    p = HaircutPolicy(base, bc, bl, ref)
    a = effective_alpha(p, B1, L1)
    assert 0 < a <= base
    Blo, Bhi = sorted((B1, B2))
    assert effective_alpha(p, Bhi, L1) <= effective_alpha(p, Blo, L1)
    Llo, Lhi = sorted((L1, L2))
    assert effective_alpha(p, B1, Llo) <= effective_alpha(p, B1, Lhi)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.6])
def test_policy_off_matches_static_engine(alpha):
    params = SpiralParams(alpha, rounds=2000)
    static = run_spiral(MarketState(100.0), params, SQRT)
    off = run_spiral_with_policy(MarketState(100.0), params, HaircutPolicy(alpha), SQRT)
    assert write_trace_csv(off, include_alpha=False) == write_trace_csv(static)
    assert off.termination == static.termination


def test_policy_trace_carries_alpha_column():
    tr = run_spiral_with_policy(MarketState(100.0), SpiralParams(0.5, rounds=5), HaircutPolicy(0.5, 1.0, 0, 100.0), SQRT)
    lines = write_trace_csv(tr).splitlines()
    assert lines[0].endswith(",alpha_eff")
    assert len(tr.alpha_path) == len(tr.records)
    assert all(a < 0.5 for a in tr.alpha_path)


def test_recorded_suppression_fixture(load_fixture):
    f = load_fixture("policy.json")
    params = SpiralParams(f["alpha_base"], rounds=f["rounds"])
    model = ImpactModel(f["k"], f["gamma"])
    init = MarketState(f["x0"], S=f["S0"])
    assert stability_report(run_spiral(init, params, model)).classification == "divergent"
    policy = HaircutPolicy(f["alpha_base"], f["beta_conc"], f["beta_liq"], f["liquidity_ref"])
    rep = stability_report(run_spiral_with_policy(init, params, policy, model))
    assert rep.classification == "bounded"
    assert rep.slope < 0.05


@pytest.mark.slow
def test_suppression_grid(load_fixture):
    f = load_fixture("policy.json")
    for cell in f["grid"]:
        params = SpiralParams(cell["alpha"], rounds=f["rounds"])
        policy = HaircutPolicy(cell["alpha"], cell["beta_conc"], 0.0, f["liquidity_ref"])
        tr = run_spiral_with_policy(MarketState(f["x0"]), params, policy, ImpactModel(cell["k"], f["gamma"]))
        assert stability_report(tr).classification == "bounded", cell


@settings(max_examples=25, deadline=None)
@given(
    alpha=st.floats(0.2, 0.7),
    k=st.floats(0.01, 1.0),
    b1=st.floats(0, 1e3),
    b2=st.floats(0, 1e3),
    L=st.floats(1.0, 1e3),
)
def test_more_concentration_penalty_never_borrows_more(alpha, k, b1, b2, L):
    lo, hi = sorted((b1, b2))
    params, model = SpiralParams(alpha, rounds=200), ImpactModel(k, 0.5)
    t_lo = run_spiral_with_policy(MarketState(100.0), params, HaircutPolicy(alpha, lo, 0, L), model)
    t_hi = run_spiral_with_policy(MarketState(100.0), params, HaircutPolicy(alpha, hi, 0, L), model)
    assert t_hi.total_borrowed <= t_lo.total_borrowed * (1 + 1e-12)


def test_stability_report_examples():
    flat = run_spiral(MarketState(100.0), SpiralParams(0.5, rounds=100), ImpactModel(0.0))
    assert stability_report(flat).classification == "bounded"
    tr = run_spiral(MarketState(100.0), SpiralParams(0.5, rounds=10_000), SQRT)
    rep = stability_report(tr)
    assert rep.classification == "divergent"
    assert rep.slope == pytest.approx(1.0, abs=0.01)


def test_stability_report_short_trace_undetermined():
    tr = run_spiral(MarketState(100.0), SpiralParams(0.5, rounds=5), SQRT)
    assert stability_report(tr).classification == "undetermined"
