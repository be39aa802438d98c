"""
Acceptance suite: one test per criterion, each printing a pass/fail line.

Monte Carlo criteria use the default worker count (``ATVGARCH_WORKERS``); the
results do not depend on it.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

import oracles
from atvgarch import (
    DGPS,
    AtvGarchSpec,
    DatasetConfig,
    FitConfig,
    McExperiment,
    VarianceInit,
    fit,
    load_returns,
    loglik,
    run_power,
    run_size,
    simulate,
    summary,
)
from atvgarch.cli import main
from atvgarch.likelihood import build_score_matrix, score, taylor_regressors
from atvgarch.testing import lm_quadratic_form, lm_test, sequential_specify

DATA = Path(__file__).parent / "data"
pytestmark = pytest.mark.slow


def _random_feasible_spec(rng):
    while True:
        L = int(rng.integers(0, 3))
        a0 = rng.uniform(0.005, 0.1)
        a1 = rng.uniform(0.02, 0.2)
        b1 = rng.uniform(0.4, 0.95 - a1)
        locs = np.sort(rng.uniform(0.15, 0.85, L))
        trs = [(rng.uniform(-0.4, 1.0) * a0, rng.uniform(1.0, 40.0), c) for c in locs]
        spec = AtvGarchSpec.from_values(a0, a1, b1, trs)
        if spec.is_positive(200):
            return spec


def _augmented_mean_loglik(x, pre, p=1, q=1):
    """Mean loglik with the cubic-in-time intercept term; the last three entries are its coefficients."""

    def f(theta):
        spec = AtvGarchSpec.from_vector(theta[:-3], p, q)
        g = spec.garch
        trs = [(tr.amplitude, tr.slope, tr.location) for tr in spec.transitions]
        s2 = oracles.variance_path(list(x), g.intercept, g.arch, g.garch, trs, *pre, delta=theta[-3:])
        return oracles.loglik_terms(x, s2).mean()

    return f


def test_c01_gradient(acceptance_report):
    rng = np.random.default_rng(11)
    init = VarianceInit("first-obs-squared")
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        spec = _random_feasible_spec(rng)
        x = simulate(spec, 200, seed=int(rng.integers(2**31))).values
        # analytic: theta scores plus the score of the Taylor coefficients at zero
        sigma2 = loglik(x, spec, init).sigma2
        half_resid = 0.5 * (x * x / sigma2 - 1.0)
        analytic = np.concatenate([
            score(x, spec, init).mean(axis=0),
            (half_resid[:, None] * taylor_regressors(x, spec, init)).mean(axis=0),
        ])
        theta = np.concatenate([spec.to_vector(), np.zeros(3)])
        numeric = oracles.central_gradient(_augmented_mean_loglik(x, init.presample(x)), theta, rel_step=1e-6)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / np.abs(numeric))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10.0
    acceptance_report(1, ok, f"gradient max relative error {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 10s)")
    assert ok


def test_c02_null_calibration(acceptance_report):
    res = run_size(McExperiment("DGP3", (1000,), 1000, null_L=0, base_seed=202, levels=(0.05,)))
    rob = res.rejection_frequency(1000, "robust-LM", 0.05)
    lm = res.rejection_frequency(1000, "LM", 0.05)
    ok = abs(rob - 0.0602) <= 0.022 and abs(lm - 0.0648) <= 0.023
    acceptance_report(
        2, ok,
        f"DGP3 T=1000 size at 5%: robust {rob:.4f} (0.0602 +/- 0.022), LM {lm:.4f} (0.0648 +/- 0.023), "
        f"{res.n_converged(1000)}/1000 converged",
    )
    assert ok


def test_c03_chi2_null(acceptance_report):
    res = run_size(McExperiment("DGP3", (2500,), 1000, null_L=0, base_seed=303, levels=(0.05,)))
    stat = res.statistics(2500, "robust-LM")
    ks = stats.kstest(stat, stats.chi2(3).cdf)
    ok = ks.pvalue > 0.01
    acceptance_report(3, ok, f"KS of robust LM vs chi2(3), DGP3 T=2500: p = {ks.pvalue:.3f} (> 0.01), n = {stat.size}")
    assert ok


def test_c04_power(acceptance_report):
    weak = run_power(McExperiment("DGP9", (1000,), 1000, null_L=0, base_seed=404, levels=(0.05,)))
    strong = run_power(McExperiment("DGP4", (2500,), 1000, null_L=0, base_seed=405, levels=(0.05,)))
    p9 = weak.rejection_frequency(1000, "robust-LM", 0.05)
    p4 = strong.rejection_frequency(2500, "robust-LM", 0.05)
    ok = abs(p9 - 0.3202) <= 0.045 and p4 >= 0.99
    acceptance_report(4, ok, f"robust power at 5%: DGP9 T=1000 {p9:.4f} (0.3202 +/- 0.045), DGP4 T=2500 {p4:.4f} (>= 0.99)")
    assert ok


def test_c05_two_transitions(acceptance_report):
    opposite = run_power(McExperiment("DGP10", (2500,), 500, null_L=1, base_seed=505, levels=(0.05,)))
    same = run_power(McExperiment("DGP11", (2500,), 500, null_L=1, base_seed=506, levels=(0.05,)))
    p10 = opposite.rejection_frequency(2500, "robust-LM", 0.05)
    p11 = same.rejection_frequency(2500, "robust-LM", 0.05)
    ok = abs(p10 - 0.9842) <= 0.03 and p11 <= 0.12
    acceptance_report(
        5, ok,
        f"robust power vs L0=1 at 5%: DGP10 {p10:.4f} (0.9842 +/- 0.03), DGP11 {p11:.4f} (<= 0.12)",
    )
    assert ok


def test_c06_lm_forms(acceptance_report):
    spec = DGPS["DGP3"].spec
    rel, agree = [], 0
    for s in range(50):
        x = simulate(spec, 5000, seed=np.random.SeedSequence(606, spawn_key=(s,)))
        fr = fit(x, 0, FitConfig(compute_se=False), start=spec)
        sm = build_score_matrix(x, fr)
        tr2 = lm_test(x, fr, scores=sm)
        quad = lm_quadratic_form(x, fr, scores=sm)
        rel.append(abs(quad.statistic - tr2.statistic) / tr2.statistic)
        agree += (tr2.pvalue < 0.05) == (quad.pvalue < 0.05)
    rel = np.array(rel)
    n_close = int(np.sum(rel <= 0.1))
    ok = n_close == 50 and agree >= 48
    acceptance_report(
        6, ok,
        f"quadratic form vs TR^2 on 50 DGP3 T=5000 samples: {n_close}/50 within 10% "
        f"(max {rel.max():.3f}), decisions agree {agree}/50 (>= 48)",
    )
    assert ok


def test_c07_consistency(acceptance_report):
    spec = DGPS["DGP5"].spec
    est = []
    n_conv = 0
    for s in range(200):
        x = simulate(spec, 5000, seed=np.random.SeedSequence(707, spawn_key=(s,)))
        fr = fit(x, 1, FitConfig(compute_se=False), start=spec)
        n_conv += fr.converged
        est.append(fr.params)
    est = np.array(est)
    mean = est.mean(axis=0)
    # empirical standard error: spread of the estimates across replications
    emp_se = est.std(axis=0, ddof=1)
    mc_se = emp_se / np.sqrt(len(est))
    z_a, z_c = (mean[3] - 0.005) / emp_se[3], (mean[5] - 0.5) / emp_se[5]
    gamma = mean[4] / (1.0 - mean[4])
    ok = abs(z_a) <= 3 and abs(z_c) <= 3 and 7.0 <= gamma <= 14.0
    acceptance_report(
        7, ok,
        f"DGP5 T=5000, 200 fits ({n_conv} converged): alpha01 {mean[3]:.5f} ({z_a:+.2f} emp. SE), "
        f"c1 {mean[5]:.4f} ({z_c:+.2f} emp. SE), gamma(mean eta) {gamma:.2f} in [7, 14]; "
        f"Monte Carlo SE of the mean: alpha01 {(mean[3] - 0.005) / mc_se[3]:+.1f}, c1 {(mean[5] - 0.5) / mc_se[5]:+.1f}",
    )
    assert ok


def test_c08_pipeline(acceptance_report):
    golden = json.loads((DATA / "synthetic_golden.json").read_text(encoding="utf-8"))
    series = load_returns(DatasetConfig(DATA / "synthetic_prices.csv", kind="prices", scale=10.0))
    trace = sequential_specify(series, max_L=3, level=0.001)
    e0, e1 = trace.entries[0], trace.entries[1]
    final = trace.entries[trace.selected_L].fit
    got_final = dict(zip(final.param_names, final.params))
    checks = {
        "LM": abs(e0.lm.statistic - golden["L0"]["LM"]) <= 0.5,
        "LMr": abs(e0.robust.statistic - golden["L0"]["LMr"]) <= 0.5,
        "L1 p-values": abs(e1.lm.pvalue - golden["L1"]["LM_pvalue"]) <= 0.02
        and abs(e1.robust.pvalue - golden["L1"]["LMr_pvalue"]) <= 0.02,
        "estimates": set(got_final) == set(golden["final"])
        and all(abs(got_final[k] - v) <= 0.005 for k, v in golden["final"].items()),
        "selection": trace.selected_L == golden["selected_L"] == 1,
    }
    stats_ok = series.T == golden["T"] and all(
        v == pytest.approx(golden["summary"][k], rel=1e-9, abs=1e-12) for k, v in summary(series).to_dict().items()
        if k in golden["summary"]
    )
    checks["summary"] = stats_ok
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance_report(
        8, ok,
        f"synthetic pipeline: LM {e0.lm.statistic:.3f}, LMr {e0.robust.statistic:.3f}, "
        f"L1 p {e1.lm.pvalue:.3f}/{e1.robust.pvalue:.3f}, selected L={trace.selected_L}"
        + (f"; mismatches: {failed}" if failed else ""),
    )
    assert ok


def test_c09_determinism(acceptance_report, tmp_path):
    outs = {}
    for workers in (1, 3):
        out = tmp_path / f"w{workers}.csv"
        argv = ["mc-size", "--dgp", "DGP3", "--T", "1000", "--reps", "200", "--seed", "1",
                "--workers", str(workers), "--out", str(out)]
        assert main(argv) == 0
        outs[workers] = out.read_bytes()
    ok = outs[1] == outs[3]
    acceptance_report(9, ok, f"mc-size CSV byte-identical with 1 and 3 workers ({len(outs[1])} bytes)")
    assert ok


def _trivial_cases(tmp_path):
    from atvgarch import (
        chi2_upper_tail,
        conditional_variance_path,
        emit_curves,
        gamma_from_eta,
        eta_from_gamma,
        heuristic_start,
        logistic_transition,
        score_theta1,
        score_theta2,
    )
    from atvgarch.estimation import _is_feasible
    from atvgarch.exceptions import NonPositiveVariance, RankDeficientRegressors
    from atvgarch.likelihood import ScoreMatrix
    from atvgarch.model import intercept_g
    from atvgarch.montecarlo import LEVEL_GRID, McResult
    from atvgarch.testing import lm_test

    def raises(exc, fn, *args):
        try:
            fn(*args)
        except exc:
            return True
        return False

    def logistic_cases():
        return logistic_transition(0.5, 10.0, 0.5) == 0.5 and logistic_transition(0.0, 1e6, 0.5) < 1e-10

    def intercept_cases():
        return np.all(intercept_g(np.linspace(0, 1, 11), DGPS["DGP3"].spec) == 0.0)

    def one_step():
        s2 = conditional_variance_path(np.array([0.3]), DGPS["DGP1"].spec, VarianceInit("fixed", 1.0, 1.0))
        return s2[0] == pytest.approx(1.05, rel=2**-52)

    def nonpositive():
        spec = AtvGarchSpec.from_values(0.005, 0.05, 0.8, [(-0.5, 50.0, 0.5)])
        return not _is_feasible(spec, 100) and raises(
            NonPositiveVariance, conditional_variance_path, np.full(100, 1e-3), spec, VarianceInit("fixed", 1e-4, 1e-6)
        )

    def empty_series():
        return raises(ValueError, simulate, DGPS["DGP1"].spec, 0)

    def single_obs():
        spec = AtvGarchSpec.from_values(0.5, 0.25, 0.25)
        unit = VarianceInit("fixed", 1.0, 1.0)
        return loglik(np.array([0.0]), spec, unit).lt[0] == 0.0 and loglik(np.array([1.0]), spec, unit).lt[0] == -0.5

    def theta2_cases():
        x = simulate(DGPS["DGP1"].spec, 100, seed=1).values
        first = np.all(score_theta2(x[:3], DGPS["DGP1"].spec, VarianceInit("fixed", 0.7, 0.4))[0] == [1.0, 0.4, 0.7])
        spec = AtvGarchSpec.from_values(0.1, 0.2, 0.0)
        init = VarianceInit("fixed", 0.9, 0.6)
        s2 = conditional_variance_path(x, spec, init)
        lag = np.column_stack([np.ones(100), np.r_[0.6, x[:-1] ** 2], np.r_[0.9, s2[:-1]]])
        return first and np.all(score_theta2(x, spec, init) == lag)

    def theta1_cases():
        spec = AtvGarchSpec.from_values(0.01, 0.05, 0.8, [(0.005, 1e-6, 0.5)])
        D = score_theta1(simulate(spec, 200, seed=4).values, spec, VarianceInit())
        center = D[99, 0] == 0.5 + 0.8 * D[98, 0]
        flat = AtvGarchSpec.from_values(0.01, 0.05, 0.8, [(0.0, 8.0, 0.4)])
        D0 = score_theta1(simulate(flat, 150, seed=4).values, flat, VarianceInit())
        return center and np.all(D0[:, 1:] == 0.0)

    def taylor_cases():
        T = 60
        x = simulate(DGPS["DGP1"].spec, T, seed=1).values
        spec = AtvGarchSpec.from_values(0.1, 0.2, 0.0)
        s2 = loglik(x, spec, VarianceInit()).sigma2
        u = np.arange(1, T + 1) / T
        no_garch = np.all(taylor_regressors(x, spec, VarianceInit()) == np.column_stack([u, u**2, u**3]) / s2[:, None])
        spec3 = DGPS["DGP3"].spec
        s2 = loglik(x, spec3, VarianceInit()).sigma2
        first = np.all(taylor_regressors(x, spec3, VarianceInit())[0] == np.array([1 / T, 1 / T**2, 1 / T**3]) / s2[0])
        return no_garch and first

    def dimensions():
        from types import SimpleNamespace

        x = simulate(DGPS["DGP3"].spec, 300, seed=2)
        k0 = build_score_matrix(x, SimpleNamespace(spec=DGPS["DGP3"].spec, init=VarianceInit())).k
        k1 = build_score_matrix(x, SimpleNamespace(spec=DGPS["DGP5"].spec, init=VarianceInit())).k
        return k0 == 6 and k1 == 9

    def transform():
        eps = np.finfo(float).eps
        return gamma_from_eta(0.5) == 1.0 and abs(gamma_from_eta(eta_from_gamma(5.0)) - 5.0) <= 4 * eps * 5.0

    def start_cases():
        z = np.random.default_rng(0).standard_normal(500)
        z = (z - z.mean()) / z.std(ddof=1)
        s0 = heuristic_start(z, 0).to_vector()
        s2 = heuristic_start(simulate(DGPS["DGP3"].spec, 1000, seed=101), 2)
        return (np.allclose(s0, [0.05, 0.05, 0.85], rtol=1e-14, atol=0)
                and [tr.location for tr in s2.transitions] == [1 / 3, 2 / 3])

    def lm_cases():
        rng = np.random.default_rng(0)
        r1 = rng.standard_normal((300, 3))
        e = rng.standard_normal(300) ** 2 - 1.0

        def resid(y, X):
            return y - X @ np.linalg.lstsq(X, y, rcond=None)[0]

        r2 = resid(rng.standard_normal((300, 3)), np.column_stack([r1, resid(e, r1)]))
        null = type("Null", (), {"L": 0})()
        res = lm_test(None, null, scores=ScoreMatrix(r1, r2, e))
        spanned = ScoreMatrix(r1, r1 @ rng.standard_normal((3, 3)), e)
        return (abs(res.statistic) < 1e-10 and res.pvalue == 1.0
                and raises(RankDeficientRegressors, lambda: lm_test(None, null, scores=spanned)))

    def chi2_zero():
        return chi2_upper_tail(0.0) == 1.0

    def mc_cases():
        def result(p, levels=LEVEL_GRID):
            rec = np.column_stack([np.zeros(p.size), np.zeros(p.size), p, np.zeros(p.size), p])
            return McResult(McExperiment("DGP3", (1000,), p.size, levels=levels), {1000: rec})

        rng = np.random.default_rng(0)
        zero = result(rng.uniform(size=200), (0.0, 0.05)).rejection_frequency(1000, "LM", 0.0) == 0.0
        calibrated = (emit_curves(result((np.arange(1000) + 0.5) / 1000), "size-discrepancy")["value"] == 0).all()
        curves = emit_curves(result(rng.beta(0.3, 1.0, 500)), "size-power")
        monotone = all(np.all(np.diff(g["value"].to_numpy()) >= 0) for _, g in curves.groupby("variant"))
        return zero and calibrated and monotone

    def data_cases():
        two = tmp_path / "two.csv"
        two.write_text("date,value\n2020-01-01,100\n2020-01-02,105\n", encoding="utf-8")
        r = load_returns(DatasetConfig(two)).values
        flat = tmp_path / "flat.csv"
        flat.write_text("date,value\n" + "".join(f"2020-01-{d:02d},42.5\n" for d in range(1, 11)), encoding="utf-8")
        zeros = np.all(load_returns(DatasetConfig(flat)).values == 0.0)
        bowley = summary(np.tile([-1.0, 0.0, 1.0], 10)).robust_skewness == 0.0
        return r.size == 1 and abs(r[0] - 0.48790) < 5e-6 and zeros and bowley

    def cli_cases():
        out = tmp_path / "s.csv"
        simulated = main(["simulate", "--dgp", "DGP4", "--T", "2500", "--seed", "7", "--out", str(out)]) == 0
        rows = len(out.read_text(encoding="utf-8").splitlines()) - 1
        runs = []
        for i in range(2):
            mc = tmp_path / f"mc{i}.csv"
            assert main(["mc-size", "--dgp", "DGP3", "--T", "1000", "--reps", "200", "--seed", "1",
                         "--out", str(mc)]) == 0
            runs.append(mc.read_bytes())
        return simulated and rows == 2500 and runs[0] == runs[1]

    return {
        "logistic center and saturation": logistic_cases,
        "empty intercept sum": intercept_cases,
        "one-step recursion": one_step,
        "non-positive intercept": nonpositive,
        "empty simulated series": empty_series,
        "single-observation loglik": single_obs,
        "GARCH-block derivatives": theta2_cases,
        "transition-block derivatives": theta1_cases,
        "Taylor regressors": taylor_cases,
        "score matrix width": dimensions,
        "slope transform": transform,
        "heuristic start": start_cases,
        "LM degenerate fixtures": lm_cases,
        "chi2 tail at zero": chi2_zero,
        "Monte Carlo curves": mc_cases,
        "returns and Bowley skewness": data_cases,
        "CLI contracts": cli_cases,
    }


def test_c10_trivial_cases(acceptance_report, tmp_path):
    results = {name: bool(check()) for name, check in _trivial_cases(tmp_path).items()}
    failed = [name for name, ok in results.items() if not ok]
    ok = not failed
    acceptance_report(
        10, ok, f"trivial cases {len(results) - len(failed)}/{len(results)} exact" + (f"; failed: {failed}" if failed else "")
    )
    assert ok
