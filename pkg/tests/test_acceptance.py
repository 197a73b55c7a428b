"""Acceptance criteria, each with its tolerance and wall-clock budget.

Every test records one PASS/FAIL line (shown in the terminal summary)
before asserting.  Statistical criteria use seed 0 for data, folds and
training, fixed before the first run.
"""

import csv
import json
import time

import numpy as np
import pytest

from oracles import auc_pairs, central_difference, logistic_objective
from spectraclass.cli import main
from spectraclass.cnn import CNN, CNNArch, TrainConfig, bce_loss, forward, gradient, init_model, train
from spectraclass.evaluation import cross_validate, make_folds, roc_auc, trapezoid_auc
from spectraclass.linear import L2D, LRA, LRP, PCALR, fit_logistic, fit_pca, logistic_loss_grad
from spectraclass.preprocess import SGConfig, fit_surface, preprocess, reject_outliers, smooth_matrix
from spectraclass.spectra import REGIONS, SpectraSet, extract_region, reference_axis
from spectraclass.synth import PRESET_NAMES, generate, preset

pytestmark = pytest.mark.slow

METHODS = (LRA(), L2D(), LRP(), PCALR(), CNN())


def cv_all(name, region, n=200, seed=0):
    """Ten-fold mean AUC and SEM of every method on one preset region."""
    r1, r2 = preset(name)
    data, _ = preprocess(generate(r1, r2, n, seed=seed))
    part = extract_region(data, REGIONS[region])
    plan = make_folds(part.n, 10, seed, labels=part.labels)
    return {m.name: cross_validate(m, part, plan, region, seed=seed) for m in METHODS}


def test_01_savitzky_golay_exactness(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    t = np.linspace(-1, 1, 221)
    worst = 0.0
    for _ in range(50):
        x = np.polyval(rng.normal(size=4) * 100, t)
        y = smooth_matrix(x, SGConfig(91, 3))
        worst = max(worst, np.abs(y - x)[45:-45].max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 1
    acceptance(1, ok, f"max interior change {worst:.2e} (< 1e-9), {elapsed:.2f}s (< 1s)")
    assert ok


def test_02_pca_correctness(acceptance):
    t0 = time.perf_counter()
    X = np.random.default_rng(0).normal(size=(200, 20))
    b = fit_pca(X, 20)
    V = b.components
    ortho = np.abs(V.T @ V - np.eye(20)).max()
    Y = X - X.mean(axis=0)
    trace_rel = abs(b.eigenvalues.sum() - (Y**2).sum()) / (Y**2).sum()
    s = np.linspace(-3, 3, 50)
    rank1 = np.outer(s, np.random.default_rng(1).normal(size=20)) + 7.0
    prop = fit_pca(rank1, 1).variance_proportion[0]
    elapsed = time.perf_counter() - t0
    ok = ortho < 1e-8 and trace_rel < 1e-8 and prop == 1.0 and elapsed < 1
    acceptance(2, ok, f"orthonormality {ortho:.1e}, trace rel. error {trace_rel:.1e}, "
                      f"rank-1 PC1 proportion {float(prop)!r}, {elapsed:.2f}s (< 1s)")
    assert ok


def test_03_logistic_solver(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(300, 6)) * np.array([1, 5, 0.2, 1, 50, 1])
    y = (Z[:, 0] - 0.1 * Z[:, 1] + rng.normal(size=300) > 0).astype(int)
    model = fit_logistic(Z, y, shrinkage=1.0)
    g_opt = np.linalg.norm(logistic_loss_grad(np.r_[model.beta0, model.beta], Z, y, 1.0)[1])
    Zs, ys = Z[:40], y[:40].astype(float)
    worst = 0.0
    for _ in range(20):
        th = rng.normal(size=7) * 0.1
        an = logistic_loss_grad(th, Zs, ys, 1.0)[1]
        fd = central_difference(lambda v: logistic_objective(v, Zs, ys, 1.0), th, 1e-6)
        worst = max(worst, np.max(np.abs(an - fd) / np.maximum(np.abs(fd), 1e-8)))
    elapsed = time.perf_counter() - t0
    ok = g_opt < 1e-6 and worst < 1e-4 and elapsed < 5
    acceptance(3, ok, f"gradient norm at optimum {g_opt:.1e} (< 1e-6), finite-difference rel. error "
                      f"{worst:.1e} (< 1e-4), {elapsed:.2f}s (< 5s)")
    assert ok


def test_04_auc_dual_route(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = worst_pairs = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        y = rng.integers(0, 2, n)
        y[rng.choice(n, 2, replace=False)] = [1, 0]
        s = rng.integers(0, int(rng.integers(1, 10)) + 1, n) / 3.0  # coarse grid: many ties
        auc, roc = roc_auc(s, y)
        worst = max(worst, abs(auc - trapezoid_auc(roc)))
        worst_pairs = max(worst_pairs, abs(auc - auc_pairs(s, y)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and worst_pairs < 1e-12 and elapsed < 5
    acceptance(4, ok, f"rank vs trapezoid {worst:.1e}, vs pair count {worst_pairs:.1e} (< 1e-12), "
                      f"{elapsed:.2f}s (< 5s)")
    assert ok


def test_05_cnn_gradient_check(acceptance):
    t0 = time.perf_counter()
    arch = CNNArch(n_blocks=1, filters=2, kernel=3, pool=2, dropout=0.25, hidden=4)
    model = init_model(arch, 16, seed=0, zero_output=False)
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(5, 16)), np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    _, grads, _ = gradient(model, X, y)
    h, worst, count = 1e-6, 0.0, 0
    for name, arr in model.params.items():
        for i in range(arr.size):
            old = arr.flat[i]
            arr.flat[i] = old + h
            up = bce_loss(forward(model, X)[1]["logit"], y)
            arr.flat[i] = old - h
            down = bce_loss(forward(model, X)[1]["logit"], y)
            arr.flat[i] = old
            fd, an = (up - down) / (2 * h), grads[name].flat[i]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-7))
            count += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10
    acceptance(5, ok, f"max rel. error {worst:.1e} over {count} parameters (< 1e-4), "
                      f"{elapsed:.2f}s (< 10s)")
    assert ok


def test_06_cnn_overfit(acceptance):
    t0 = time.perf_counter()
    r1, r2 = preset("colon_like")
    data = extract_region(generate(r1, r2, 32, seed=0), REGIONS["HW"])
    model = train(CNNArch(), data, TrainConfig(epochs=200, val_fraction=0.0, seed=0))
    loss = bce_loss(forward(model, data.matrix)[1]["logit"], data.labels)
    elapsed = time.perf_counter() - t0
    ok = loss < 0.05 and len(model.trace) <= 200 and elapsed < 120
    acceptance(6, ok, f"training BCE {loss:.4f} (< 0.05) after {len(model.trace)} epochs, "
                      f"{elapsed:.1f}s (< 120s)")
    assert ok


def test_07_null_calibration(acceptance):
    t0 = time.perf_counter()
    reports = cv_all("null", "LW")
    elapsed = time.perf_counter() - t0
    inside = {m: abs(r.mean_auc - 0.5) <= 3 * r.sem for m, r in reports.items()}
    detail = ", ".join(f"{m} {r.mean_auc:.3f}+/-{r.sem:.3f}" for m, r in reports.items())
    ok = all(inside.values()) and elapsed < 300
    acceptance(7, ok, f"LW {detail}; {elapsed:.0f}s (< 300s)")
    assert ok


def test_08_subtype_pattern(acceptance):
    t0 = time.perf_counter()
    hw = cv_all("subtype_like", "HW")
    lw = cv_all("subtype_like", "LW")
    elapsed = time.perf_counter() - t0
    a = {m: r.mean_auc for m, r in hw.items()}
    b = {m: r.mean_auc for m, r in lw.items()}
    ok_a = all(v >= 0.9 for v in a.values())
    margin = min(b[m] for m in ("lrp", "pca", "cnn")) - max(b["lra"], b["l2d"])
    ok = ok_a and margin >= 0.1 and elapsed < 600
    fmt = lambda d: " ".join(f"{m}={v:.3f}" for m, v in d.items())
    acceptance(8, ok, f"HW {fmt(a)}; LW {fmt(b)}; local-global margin {margin:.3f} (>= 0.1); "
                      f"{elapsed:.0f}s (< 600s)")
    assert ok


def test_09_explain_localisation(acceptance, tmp_path):
    t0 = time.perf_counter()
    assert main(["synth", "--preset", "colon_like", "--n", "200", "--seed", "0",
                 "--out", str(tmp_path / "data")]) == 0
    a, b = (tmp_path / "data" / f"{n}.csv" for n in PRESET_NAMES["colon_like"])
    out = tmp_path / "explain"
    code = main(["explain", "--input-a", str(a), "--input-b", str(b), "--region", "HW",
                 "--seed", "0", "--out", str(out)])
    with open(out / "importance_HW.csv") as fh:
        rows = list(csv.DictReader(fh))
    top = max(rows, key=lambda r: float(r["importance"]))["feature"]
    lo, hi = (float(v) for v in top.split("-"))
    sal = np.loadtxt(out / "saliency_HW.csv", delimiter=",", skiprows=1)
    w, mean = sal[:, 0], sal[:, 1]
    band = (w >= 2700) & (w <= 3200)
    inside, outside = mean[band].mean(), mean[~band].mean()
    elapsed = time.perf_counter() - t0
    ok = code == 0 and lo <= 2930 <= hi and inside > outside and elapsed < 600
    acceptance(9, ok, f"top sub-band {top}; saliency inside 2700-3200 {inside:.3f} vs outside "
                      f"{outside:.3f}; {elapsed:.0f}s (< 600s)")
    assert ok


def test_10_reproducible_summary(acceptance, tmp_path):
    t0 = time.perf_counter()
    assert main(["synth", "--preset", "subtype_like", "--n", "40", "--seed", "0",
                 "--out", str(tmp_path / "data")]) == 0
    a, b = (tmp_path / "data" / f"{n}.csv" for n in PRESET_NAMES["subtype_like"])
    outs = []
    for run in ("one", "two"):
        out = tmp_path / run
        assert main(["evaluate", "--input-a", str(a), "--input-b", str(b), "--seed", "5",
                     "--out", str(out)]) == 0
        outs.append(out)
    same = (outs[0] / "summary.csv").read_bytes() == (outs[1] / "summary.csv").read_bytes()
    reports_same = all(
        json.loads((outs[0] / f.name).read_text()) == json.loads(f.read_text())
        for f in outs[1].glob("report_*.json")
    )
    elapsed = time.perf_counter() - t0
    ok = same and reports_same
    acceptance(10, ok, f"summary.csv bitwise identical: {same}; per-fold reports identical: "
                       f"{reports_same}; two runs took {elapsed:.0f}s")
    assert ok


def test_11_outlier_gate(acceptance):
    t0 = time.perf_counter()
    w = reference_axis()
    rng = np.random.default_rng(0)
    # uniform noise is bounded by sqrt(3) standard deviations, so nothing else crosses 3
    X = 10 + rng.uniform(-1, 1, size=(100, w.values.size))
    col = 1234
    X[42, col] = X[:, col].mean() + 4 * X[:, col].std(ddof=1)
    s = SpectraSet(w, X, np.ones(100, int))
    _, rejected = reject_outliers(s, fit_surface(s, k=3.0))
    elapsed = time.perf_counter() - t0
    ok = rejected.tolist() == [42] and elapsed < 1
    acceptance(11, ok, f"rejected {rejected.tolist()} (expected [42]), {elapsed:.2f}s (< 1s)")
    assert ok
