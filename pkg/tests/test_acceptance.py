"""Acceptance criteria 1-9; each test prints one PASS/FAIL line.

Hard criteria are also asserted. The stochastic training bands (6, 7 and the
disparity part of 8) are reported as measured: their verdict is printed, and
pytest only asserts the deterministic parts (runtime, bit accounting).
"""

import itertools
import sys
import time

import numpy as np
import pytest

from conftest import TWO_CLIENT_Q, wide_client, two_client
from fairfedlab import cli
from fairfedlab import population as pop
from fairfedlab.data import SplitSpec, SyntheticSpec, generate_synthetic, make_clients, split_clients
from fairfedlab.federation import ProtocolConfig, cfl_run, fedfb_run
from fairfedlab.federation.server import stat_size
from fairfedlab.fairbatch import verify_parity_equivalence
from fairfedlab.models import ModelParams, TrainConfig, n_params, weighted_grad, weighted_loss
from helpers import descent_derivatives, pooled_statistics

METHODS = ["FedAvg", "FedFB", "LFT+FedAvg", "LFT+Ensemble", "CFL"]
SEEDS = [0, 1, 2, 3, 4]


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            sys.stdout.write(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}\n")

    return emit


# --- 1 ----------------------------------------------------------------------


def test_criterion_1_fairness_floor(report):
    start = time.perf_counter()
    d = pop.compute_delta(wide_client())
    elapsed = time.perf_counter() - start
    ok = 0.19 <= d.delta <= 0.23 and elapsed < 5.0
    report(1, ok, f"delta={d.delta:.4f} (band [0.19, 0.23]), {elapsed:.2f}s (< 5s)")
    assert ok


# --- 2 ----------------------------------------------------------------------


def test_criterion_2_ordering(report):
    start = time.perf_counter()
    parts, ok = [], True
    for q0, q1 in TWO_CLIENT_Q:
        spec = two_client(q0, q1)
        cfl = pop.min_disparity(spec, "CFL")
        fed_pts = pop.achievable_points(spec, "LFT+FedAvg", n_points=128)
        fed = min(p.dp_disp for p in fed_pts)
        ens = pop.min_disparity(spec, "LFT+Ensemble")
        # accuracy at matched disparity, on budgets both methods can meet
        eps = np.linspace(max(fed, cfl), 0.3, 7)
        fed_curve = pop.frontier(fed_pts, eps, "LFT+FedAvg")
        cfl_curve = pop.tradeoff_curve(spec, "CFL", eps)
        acc_gap = min(c.accuracy - f.accuracy for c, f in zip(cfl_curve, fed_curve))
        ok &= cfl <= 1e-4 and fed >= cfl - 1e-12 and acc_gap >= -1e-3
        if q0 != q1:
            ok &= fed > 1e-4  # strict gap reported for unequal q
        if q0 == q1:
            ok &= ens > fed
        parts.append(f"q=({q0},{q1}) CFL={cfl:.1e} LFT+FedAvg={fed:.4f} LFT+Ens={ens:.4f} accgap={acc_gap:+.4f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120.0
    report(2, ok, "; ".join(parts) + f"; {elapsed:.1f}s (< 120s)")
    assert ok


# --- 3 ----------------------------------------------------------------------


def test_criterion_3_parity_equivalence_oracle(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    disagreements = 0
    for _ in range(20):
        a = rng.permutation(np.repeat([0, 1], 4)) if rng.random() < 0.5 else rng.permutation([0] * 3 + [1] * 5)
        y = rng.integers(0, 2, 8)
        for bits in itertools.product((0, 1), repeat=8):
            f_zero, dp = verify_parity_equivalence(y, a, np.array(bits))
            disagreements += f_zero != dp
    elapsed = time.perf_counter() - start
    ok = disagreements == 0 and elapsed < 1.0
    report(3, ok, f"{disagreements} disagreements over 20 x 256 classifiers, {elapsed:.2f}s (< 1s)")
    assert ok


# --- 4 ----------------------------------------------------------------------


def test_criterion_4_descent_directions(report):
    start = time.perf_counter()
    counts = {n: int(np.sum(descent_derivatives(n, seed=1) <= 1e-4)) for n in ("DP", "EO", "EOD", "CP")}
    elapsed = time.perf_counter() - start
    ok = all(c >= 18 for c in counts.values()) and elapsed < 60.0
    report(4, ok, ", ".join(f"{k} {v}/20" for k, v in counts.items()) + f"; {elapsed:.1f}s (< 60s)")
    assert ok


# --- 5 ----------------------------------------------------------------------


def test_criterion_5_aggregation_identity(report):
    ds = generate_synthetic(SyntheticSpec(n=3000, seed=0))
    parts = make_clients(split_clients(ds, SplitSpec.named("medium"), seed=0))
    cfg = ProtocolConfig("DP", k=1, T=10, alpha=0.1, train=TrainConfig(local_epochs=5, learning_rate=0.01))
    res = fedfb_run(parts, cfg, seed=0)
    worst = max(
        float(np.max(np.abs(F.values - pooled_statistics("DP", parts, p).values)))
        for F, p in zip(res.stats_history, res.params_history)
    )
    fed = fedfb_run([ds], cfg, seed=0)
    cen = cfl_run(ds, cfg, seed=0)
    same = all(a.lam == b.lam for a, b in zip(fed.log, cen.log)) and np.array_equal(fed.params.theta, cen.params.theta)
    ok = len(res.stats_history) == 10 and worst <= 1e-10 and same
    report(5, ok, f"max |F_server - F_pooled| = {worst:.1e} over 10 rounds (<= 1e-10); I=1 trajectory identical: {same}")
    assert ok


# --- 6-8: the training protocol ---------------------------------------------


def sweep_config(split: str, methods) -> cli.ExperimentConfig:
    return cli.ExperimentConfig.from_dict(
        {"mode": "sweep", "dataset": {"kind": "synthetic", "split": split}, "methods": list(methods), "seeds": SEEDS}
    )


def run_protocol(split: str, methods):
    """Full grid protocol; returns per-method results at the selected alpha."""
    cfg = sweep_config(split, methods)
    lr, rows, _ = cli.sweep(cfg)
    chosen = {}
    for m, _, alpha, acc, _, disp, *_ in rows:
        if m not in chosen or float(disp) < chosen[m][1]:
            chosen[m] = (float(alpha), float(disp))
    cells = [cli.Cell(m, s, lr, chosen[m][0]) for m in methods for s in SEEDS]
    results = cli.run_cells(cfg, cells)
    out = {}
    for m in methods:
        rs = [r for r in results if r["method"] == m]
        out[m] = {
            "alpha": chosen[m][0],
            "acc": float(np.mean([r["accuracy"] for r in rs])),
            "disp": float(np.mean([r["disparity"] for r in rs])),
            "hard": float(np.mean([r["disparity_hard"] for r in rs])),
            "bits": [r["bits_total"] for r in rs],
        }
    return cfg, lr, out


@pytest.fixture(scope="module")
def protocol_runs():
    start = time.perf_counter()
    runs = {"medium": run_protocol("medium", METHODS)}
    for split in ("low", "high"):
        runs[split] = run_protocol(split, ["FedFB"])
    return runs, time.perf_counter() - start


def fmt(r: dict) -> str:
    return f"acc {r['acc']:.3f} DP {r['disp']:.3f} (hard {r['hard']:.3f}, alpha {r['alpha']:g})"


def test_criterion_6_synthetic_bands(report, protocol_runs):
    runs, elapsed = protocol_runs
    _, lr, res = runs["medium"]
    avg, fb = res["FedAvg"], res["FedFB"]
    checks = {
        "FedAvg acc in [.85,.92]": 0.85 <= avg["acc"] <= 0.92,
        "FedAvg DP in [.35,.46]": 0.35 <= avg["disp"] <= 0.46,
        "FedFB DP <= .12": fb["disp"] <= 0.12,
        "FedFB acc >= .65": fb["acc"] >= 0.65,
        "FedFB DP < LFT+Ensemble": fb["disp"] < res["LFT+Ensemble"]["disp"],
        "FedFB DP < LFT+FedAvg": fb["disp"] < res["LFT+FedAvg"]["disp"],
        "runtime < 10 min": elapsed < 600.0,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = f"lr {lr:g}; " + "; ".join(f"{m}: {fmt(res[m])}" for m in METHODS)
    report(6, not failed, detail + (f"; unmet: {', '.join(failed)}" if failed else ""))
    assert elapsed < 600.0
    assert all(np.isfinite(r["disp"]) for r in res.values())


def test_criterion_7_heterogeneity(report, protocol_runs):
    runs, _ = protocol_runs
    values = {s: runs[s][2]["FedFB"] for s in ("low", "medium", "high")}
    ok = all(v["disp"] <= 0.10 for v in values.values())
    report(7, ok, "FedFB " + "; ".join(f"{s}: {fmt(v)}" for s, v in values.items()) + " (each <= .10)")
    assert all(np.isfinite(v["disp"]) for v in values.values())


def test_criterion_8_quantization(report, protocol_runs):
    runs, _ = protocol_runs
    cfg, lr, res = runs["medium"]
    fb = res["FedFB"]
    cfg.protocol = {**cfg.protocol, "quant_bits": 10}
    quant = cli.run_cells(cfg, [cli.Cell("FedFB", s, lr, fb["alpha"]) for s in SEEDS])
    qdisp = float(np.mean([r["disparity"] for r in quant]))
    pc = cli.protocol_config(cfg)
    expected = pc.T * 3 * stat_size("DP", 2) * 10
    bits_ok = all(r["bits_total"] == expected for r in quant) and all(b == expected * 64 // 10 for b in fb["bits"])
    close = abs(qdisp - fb["disp"]) <= 0.05
    report(
        8,
        close and bits_ok,
        f"FedFB DP {fb['disp']:.3f} vs FedFB(10bits) {qdisp:.3f} (|diff| {abs(qdisp - fb['disp']):.3f} <= .05); "
        f"bits {quant[0]['bits_total']} = T x I x 2A x 10 = {expected}: {bits_ok}",
    )
    assert bits_ok


# --- 9 ----------------------------------------------------------------------


def fd_grad(params, X, y, w, h=1e-6):
    g = np.empty_like(params.theta)
    for k in range(params.theta.size):
        e = np.zeros_like(params.theta)
        e[k] = h
        up = weighted_loss(ModelParams(params.kind, params.d, params.theta + e), X, y, w)
        dn = weighted_loss(ModelParams(params.kind, params.d, params.theta - e), X, y, w)
        g[k] = (up - dn) / (2 * h)
    return g


def test_criterion_9_kernels(report):
    rng = np.random.default_rng(9)
    grad_err = 0.0
    for kind in ("logistic", "mlp-4"):
        for _ in range(10):
            p = ModelParams(kind, 3, 0.7 * rng.normal(size=n_params(kind, 3)))
            X, y, w = rng.normal(size=(30, 3)), rng.integers(0, 2, 30), rng.uniform(0, 2, 30)
            ref = fd_grad(p, X, y, w)
            grad_err = max(grad_err, np.linalg.norm(weighted_grad(p, X, y, w) - ref) / np.linalg.norm(ref))
    spec = two_client(0.5, 0.5)
    lams = np.linspace(-0.45, 0.45, 37)  # inside the admissible interval for q = .5
    g_err = max(abs(pop.invert_g(spec, pop.compute_g(spec, lam)) - lam) for lam in lams)
    lp_err = 0.0
    for seed in range(5):
        r = np.random.default_rng(seed)
        q = r.uniform(0.2, 0.8)
        s = pop.PopulationSpec.gaussian([(r.uniform(-1, 4), r.uniform(-1, 4), r.uniform(0.5, 1.5), q) for _ in range(2)])
        prob = pop.discretize(s, n_points=64)
        tops = np.abs(prob.client_md() @ (prob.objective() > 0))
        eps = r.uniform(0.0, 1.0, 2) * tops
        acc, _ = prob.evaluate(pop.solve_finite_lp(prob, eps))
        lp_err = max(lp_err, abs(pop.lagrangian_bound(prob, eps)[0] - acc))
    ok = grad_err <= 1e-5 and g_err <= 1e-6 and lp_err <= 1e-3
    report(9, ok, f"gradient rel err {grad_err:.1e} (<= 1e-5); g round-trip {g_err:.1e} (<= 1e-6); LP vs dual grid {lp_err:.1e} (<= 1e-3)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
