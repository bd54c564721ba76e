"""Exit criteria, one test per criterion, each at its stated tolerance and time budget.

Every test records a one-line verdict; the lines are printed together at the
end of the session by the terminal-summary hook in ``conftest.py``.
"""

import filecmp
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import gradient_check
from wae_lab.autoencoder import Mlp, WaeConfig
from wae_lab.harness import cli
from wae_lab.harness.config import load_config
from wae_lab.harness.experiments import run_experiment
from wae_lab.measures import DiscreteMeasure, Gaussian, benchmark_bumps, sample
from wae_lab.rng import make_rng
from wae_lab.transport import w1_1d_closed_form, w1_exact
from wae_lab.variation import CandidateClass, tv_analytic, yatracos_norm

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
VERDICTS = {}


def record(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(VERDICTS[number])


def timed_run(name: str):
    t0 = time.perf_counter()
    res = run_experiment(load_config(str(CONFIGS / name)))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def w1_d4():
    return timed_run("rate_w1_d4.cfg")


def test_exact_transport_matches_sorted_closed_form():
    t0 = time.perf_counter()
    rng = make_rng(2024)
    worst_diff = worst_gap = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 257))
        a = DiscreteMeasure.uniform(rng.normal(size=(n, 1)))
        b = DiscreteMeasure.uniform(rng.uniform(-2, 2, size=(n, 1)))
        plan = w1_exact(a, b, method="network_simplex")
        worst_diff = max(worst_diff, abs(plan.cost - w1_1d_closed_form(a, b)))
        worst_gap = max(worst_gap, abs(plan.gap))
    elapsed = time.perf_counter() - t0
    ok = worst_diff <= 1e-9 and worst_gap <= 1e-6 and elapsed < 30
    record(1, ok, f"max |simplex - closed form| = {worst_diff:.2e}, max gap = {worst_gap:.2e}, {elapsed:.1f} s")
    assert ok


def test_yatracos_norm_equals_tv_inside_class():
    t0 = time.perf_counter()
    rng = make_rng(7)
    worst = 0.0
    for _ in range(20):
        f = Gaussian.normal(float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 2)))
        g = Gaussian.normal(float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 2)))
        cls = CandidateClass((f, g))
        worst = max(worst, abs(yatracos_norm(f, g, cls) - tv_analytic(f, g)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 10
    record(2, ok, f"max |Yatracos - TV| = {worst:.2e} over 20 pairs, {elapsed:.1f} s")
    assert ok


def test_yatracos_concentration():
    res, elapsed = timed_run("conc_yatracos.cfg")
    ok = res.passed and res.summary["k2"] > 0 and elapsed < 120
    record(3, ok, f"slope = {res.fit.slope:.3f}, fitted k2 = {res.summary['k2']:.3f}, "
                  f"tails {'hold' if res.checks['tail_fitted'] else 'fail'}, {elapsed:.0f} s")
    assert ok


def test_empirical_w1_rate_and_tail(w1_d4):
    d1, t1 = timed_run("rate_w1_d1.cfg")
    d4, t4 = w1_d4
    elapsed = t1 + t4
    ok = d1.passed and d4.passed and elapsed < 300
    record(4, ok, f"d=1 slope = {d1.fit.slope:.3f}, d=4 slope = {d4.fit.slope:.3f}, "
                  f"tails {'hold' if d1.checks['tail'] and d4.checks['tail'] else 'fail'}, {elapsed:.0f} s")
    assert ok


def test_encoded_latent_rate_and_offset():
    exact, t1 = timed_run("corollary1_exact.cfg")
    cont, t2 = timed_run("corollary1_contaminated.cfg")
    last = max(cont.summary["medians"])
    elapsed = t1 + t2
    ok = exact.passed and cont.checks["offset"] and elapsed < 180
    record(5, ok, f"exact slope = {exact.fit.slope:.3f}, contaminated median at n={last} = "
                  f"{cont.summary['medians'][last]:.4f}, {elapsed:.0f} s")
    assert ok


def test_end_to_end_error_split():
    runs = {}
    elapsed = 0.0
    for name in ("oracle", "perturbed", "trained"):
        runs[name], t = timed_run(f"wae_{name}.cfg")
        elapsed += t
    cells = {name: len(r.values("slack")) for name, r in runs.items()}
    slack_ok = all(r.checks["slack"] for r in runs.values()) and all(c >= 20 for c in cells.values())
    oracle = runs["oracle"]
    slope_ok = oracle.fit is not None and abs(oracle.fit.slope + 0.5) <= 0.1
    e2_ok = runs["perturbed"].checks["e2_within_perturbation"]
    ok = slack_ok and slope_ok and e2_ok and elapsed < 600
    min_slack = min(r.summary["min_slack"] for r in runs.values())
    record(6, ok, f"min slack = {min_slack:.2e}, oracle slope = {oracle.fit.slope:.3f}, "
                  f"perturbed max e2 = {runs['perturbed'].summary['e2_max']:.4f}, {elapsed:.0f} s")
    assert ok


def test_pointwise_cost_below_two_w1_sum():
    res, elapsed = timed_run("corollary2.cfg")
    runs = res.summary["runs"]
    ok = runs >= 200 and res.summary["holds"] == runs and res.checks["inequality"]
    record(7, ok, f"{res.summary['holds']}/{runs} runs hold, min margin = {res.summary['min_margin']:.2e}, "
                  f"{elapsed:.0f} s")
    assert ok


def test_objective_gradients():
    cfg = WaeConfig(sinkhorn_tol=1e-14, sinkhorn_max_iter=200_000, lam=0.7)
    bumps = benchmark_bumps()
    worst = {}
    for surrogate in ("kde", "energy"):
        c = cfg.with_(tv_surrogate=surrogate)
        errs = []
        for point in range(20):
            enc = Mlp.init((1, 4, 1), "tanh", 1000 + point)
            dec = Mlp.init((1, 4, 1), "tanh", 2000 + point)
            rel, _, _ = gradient_check(enc, dec, sample(bumps, 24, 3000 + point), c, point)
            errs.append(rel)
        worst[surrogate] = max(errs)
    ok = all(v <= 1e-4 for v in worst.values())
    record(8, ok, f"max relative error kde = {worst['kde']:.2e}, energy = {worst['energy']:.2e} (20 points each)")
    assert ok


def test_dimension_estimate_predicts_rate(w1_d4):
    dim, _ = timed_run("dim_d4.cfg")
    s_hat = dim.summary["s_hat"]
    slope = w1_d4[0].fit.slope
    gap = abs(slope + 1.0 / s_hat)
    ok = dim.checks["range"] and gap <= 0.1
    record(9, ok, f"s_hat = {s_hat:.3f}, -1/s_hat = {-1 / s_hat:.3f}, measured slope = {slope:.3f}, "
                  f"difference = {gap:.3f}")
    assert ok


@pytest.mark.parametrize("name, kind", [("rate_w1_d1.cfg", "rate-w1")])
def test_rerun_is_byte_identical(tmp_path, name, kind):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cli.main([kind, "--config", str(CONFIGS / name), "--out", str(out)])
        outs.append(out)
    same = all(filecmp.cmp(outs[0] / f, outs[1] / f, shallow=False) for f in ("results.csv", "fit.csv", "meta.txt"))
    ok = same and (outs[0] / "results.csv").stat().st_size > 0
    record(10, ok, f"{name}: results.csv, fit.csv and meta.txt byte-identical across two runs")
    assert ok
