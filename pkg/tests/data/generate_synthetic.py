"""
Regenerate the frozen synthetic price series and its golden pipeline values.

The series is a one-transition ATV-GARCH path in returns x 10 units, turned
into a price index on business days. Run from the repository root:

    python tests/data/generate_synthetic.py
"""
import json
from pathlib import Path

import numpy as np
import pandas as pd

from atvgarch import AtvGarchSpec, DatasetConfig, load_returns, simulate, summary
from atvgarch.testing import sequential_specify

HERE = Path(__file__).parent
SEED = 20220407
T = 8127
SPEC = AtvGarchSpec.from_values(0.047, 0.126, 0.732, transitions=[(0.069, 10.15, 0.758)])


def make_prices() -> pd.DataFrame:
    x = simulate(SPEC, T, seed=SEED).values
    dates = pd.bdate_range("1990-01-02", periods=T + 1)
    log_p = np.log(20.0) + np.concatenate([[0.0], np.cumsum(x / 10.0)])
    return pd.DataFrame({"date": dates.strftime("%Y-%m-%d"), "value": np.exp(log_p)})


def golden(path: Path) -> dict:
    series = load_returns(DatasetConfig(path, kind="prices", scale=10.0))
    trace = sequential_specify(series, max_L=3, level=0.001)
    e0, e1 = trace.entries[0], trace.entries[1]
    final = e1.fit
    return {
        "T": series.T,
        "summary": summary(series).to_dict(),
        "L0": {"LM": e0.lm.statistic, "LMr": e0.robust.statistic,
               "LM_pvalue": e0.lm.pvalue, "LMr_pvalue": e0.robust.pvalue},
        "L1": {"LM": e1.lm.statistic, "LMr": e1.robust.statistic,
               "LM_pvalue": e1.lm.pvalue, "LMr_pvalue": e1.robust.pvalue},
        "selected_L": trace.selected_L,
        "final": dict(zip(final.param_names, map(float, final.params))),
        "final_gamma": final.spec.transitions[0].slope,
        "se": dict(zip(final.param_names, map(float, final.se))),
        "robust_se": dict(zip(final.param_names, map(float, final.robust_se))),
    }


if __name__ == "__main__":
    path = HERE / "synthetic_prices.csv"
    make_prices().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    with open(HERE / "synthetic_golden.json", "w", encoding="utf-8") as fh:
        json.dump(golden(path), fh, indent=2)
        fh.write("\n")
