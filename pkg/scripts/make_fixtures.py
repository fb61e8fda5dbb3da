"""Regenerate tests/fixtures/*.json by running the searches they record.

    python3 scripts/make_fixtures.py
"""

import json
from pathlib import Path

from leverage_spiral.haircut import find_suppressing_beta
from leverage_spiral.impact import ImpactModel
from leverage_spiral.spiral import MarketState, SpiralParams, max_sustainable_extraction

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def extraction():
    init = dict(x0=100.0, S0=1.0, z0=0.0)
    model = dict(k=1.0, gamma=0.5)
    res = max_sustainable_extraction(
        MarketState(init["x0"], z=init["z0"], S=init["S0"]),
        SpiralParams(0.5),
        ImpactModel(**model),
        target_rounds=2000,
    )
    return {
        **init,
        **model,
        "alpha": 0.5,
        "target_rounds": 2000,
        "resolution": 1e-4,
        "expected": {
            "epsilon_star": res.epsilon_star,
            "total_extracted": res.total_extracted,
            "exceeds_initial": res.exceeds_initial,
            "flag": res.flag,
        },
    }


def policy():
    rounds, L = 10_000, 100.0
    cells = []
    for alpha in (0.4, 0.5, 0.6):
        for k in (0.1, 1.0):
            beta, rep = find_suppressing_beta(
                MarketState(100.0), SpiralParams(alpha, rounds=rounds), ImpactModel(k, 0.5), L
            )
            cells.append({"alpha": alpha, "k": k, "beta_conc": beta, "classification": rep.classification})
    main = next(c for c in cells if c["alpha"] == 0.5 and c["k"] == 0.1)
    return {
        "x0": 100.0,
        "S0": 1.0,
        "alpha_base": 0.5,
        "k": 0.1,
        "gamma": 0.5,
        "rounds": rounds,
        "beta_conc": main["beta_conc"],
        "beta_liq": 0.0,
        "liquidity_ref": L,
        "search": {"beta_start": 1.0, "factor": 2.0},
        "grid": cells,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in (("extraction.json", extraction), ("policy.json", policy)):
        (OUT / name).write_text(json.dumps(build(), indent=2) + "\n")
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()
