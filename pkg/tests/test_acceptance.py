"""Acceptance suite.

Each test checks one numbered criterion at its stated tolerance and records a
PASS/FAIL/SKIP line that the conftest terminal-summary hook prints at the end
of the run.
"""

import os
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from conftest import ACCEPTANCE_RESULTS, random_spd
from spcmh.dataio import load_dataset, normalize_center
from spcmh.evaluation import (
    average_precision,
    evaluate_retrieval,
    mean_average_precision,
    precision_recall,
    shuffled_map,
)
from spcmh.exceptions import ConfigurationError
from spcmh.graph import build_affinity, laplacian
from spcmh.hashing import encode, hamming
from spcmh.linalg import solve_sylvester, sylvester_residual
from spcmh.model import Hyperparams, train, update_Px, update_Ux

WIKI_ENV = "SPCMH_WIKI_DIR"
SEEDS = range(5)


def record(num, desc, passed, detail):
    ACCEPTANCE_RESULTS[num] = ("PASS" if passed else "FAIL", desc, detail)
    assert passed, f"criterion {num} ({desc}): {detail}"


def kron_sylvester(A, B, C):
    """Solve ``AV + VB = C`` as one dense linear system on ``vec(V)``."""
    h, n = C.shape
    K = np.kron(np.eye(n), A) + np.kron(B.T, np.eye(h))
    return np.linalg.solve(K, C.reshape(-1, order="F")).reshape((h, n), order="F")


# one trained model per (H, seed) on the fixed synthetic split, shared between tests
_RUNS = {}


def synthetic_run(synthetic, H, seed):
    key = (H, seed)
    if key not in _RUNS:
        data, prepped, stats = synthetic
        tr, qr = data.train_idx, data.query_idx
        start = time.perf_counter()
        with threadpool_limits(limits=1):
            model, report = train(
                prepped.X[:, tr], prepped.Y[:, tr], Hyperparams(H=H, seed=seed), mean_x=stats.mean_x, mean_y=stats.mean_y
            )
            codes = {
                "qx": encode(model.P_x, model.mean_x, data.X[:, qr]),
                "qy": encode(model.P_y, model.mean_y, data.Y[:, qr]),
                "dx": encode(model.P_x, model.mean_x, data.X[:, tr]),
                "dy": encode(model.P_y, model.mean_y, data.Y[:, tr]),
            }
            lq, ld = data.labels[qr], data.labels[tr]
            maps = {
                "i2t": evaluate_retrieval(codes["qx"], codes["dy"], lq, ld)["map"],
                "t2i": evaluate_retrieval(codes["qy"], codes["dx"], lq, ld)["map"],
            }
        _RUNS[key] = {
            "model": model,
            "report": report,
            "maps": maps,
            "elapsed": time.perf_counter() - start,
        }
    return _RUNS[key]


def test_criterion_01_sylvester_matches_kronecker_oracle():
    rng = np.random.default_rng(101)
    worst_err = worst_res = 0.0
    start = time.perf_counter()
    for _ in range(50):
        h = int(rng.integers(1, 17))
        n = int(rng.integers(1, 33))
        U = rng.standard_normal((int(rng.integers(1, 40)), h))
        A = U.T @ U
        B = random_spd(rng, n, shift=rng.uniform(0.1, 10.0))
        C = rng.standard_normal((h, n))
        V = solve_sylvester(A, B, C)
        V_ref = kron_sylvester(A, B, C)
        worst_err = max(worst_err, np.linalg.norm(V - V_ref) / np.linalg.norm(V_ref))
        worst_res = max(worst_res, sylvester_residual(A, B, C, V) / (1.0 + np.linalg.norm(C)))
    elapsed = time.perf_counter() - start
    passed = worst_err < 1e-8 and worst_res <= 1e-8 and elapsed < 5.0
    record(
        1,
        "Sylvester solver vs Kronecker oracle",
        passed,
        f"max rel err {worst_err:.2e} (<1e-8), max scaled residual {worst_res:.2e} (<=1e-8), {elapsed:.2f}s (<5s)",
    )


def test_criterion_02_trace_identity():
    rng = np.random.default_rng(202)
    worst = 0.0
    for i in range(20):
        H, N = int(rng.integers(1, 17)), int(rng.integers(2, 41))
        V = rng.standard_normal((H, N))
        if i % 2:
            W = build_affinity(rng.standard_normal((4, N)), rng.standard_normal((3, N)), 0.5, 0.5, k=min(3, N - 1))
        else:
            W = rng.uniform(0.0, 1.0, (N, N))
            W = 0.5 * (W + W.T)
            np.fill_diagonal(W, 0.0)
        lhs = np.trace(V @ laplacian(W) @ V.T)
        rhs = 0.5 * sum(W[a, b] * np.sum((V[:, a] - V[:, b]) ** 2) for a in range(N) for b in range(N))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    record(2, "trace identity of the affinity Laplacian", worst <= 1e-8, f"max scaled gap {worst:.2e} (<=1e-8)")


def _p_block(V, X, mu, gamma):
    def loss(P):
        return mu * np.sum((V - P @ X) ** 2) + gamma * np.sum(P * P)

    def grad(P):
        return -2.0 * mu * (V - P @ X) @ X.T + 2.0 * gamma * P

    def scale(P):
        return 2.0 * mu * (np.linalg.norm(V @ X.T) + np.linalg.norm(P @ X @ X.T)) + 2.0 * gamma * np.linalg.norm(P)

    return loss, grad, scale


def _u_block(X, V, lam, gamma):
    def loss(U):
        return lam * np.sum((X - U @ V) ** 2) + gamma * np.sum(U * U)

    def grad(U):
        return -2.0 * lam * (X - U @ V) @ V.T + 2.0 * gamma * U

    def scale(U):
        return 2.0 * lam * (np.linalg.norm(X @ V.T) + np.linalg.norm(U @ V @ V.T)) + 2.0 * gamma * np.linalg.norm(U)

    return loss, grad, scale


def test_criterion_03_closed_form_updates_are_stationary():
    rng = np.random.default_rng(303)
    worst_grad = 0.0
    decreases = 0
    for _ in range(20):
        H, N = int(rng.integers(2, 17)), int(rng.integers(10, 60))
        D_x, D_y = int(rng.integers(2, 25)), int(rng.integers(2, 25))
        X, Y = rng.standard_normal((D_x, N)), rng.standard_normal((D_y, N))
        V = rng.standard_normal((H, N))
        lam_x, lam_y = rng.uniform(0.1, 2.0, 2)
        mu, gamma = rng.uniform(0.5, 200.0), rng.uniform(1e-3, 1.0)
        blocks = [
            (update_Px(V, X, mu, gamma), _p_block(V, X, mu, gamma)),
            (update_Px(V, Y, mu, gamma), _p_block(V, Y, mu, gamma)),
            (update_Ux(X, V, lam_x, gamma), _u_block(X, V, lam_x, gamma)),
            (update_Ux(Y, V, lam_y, gamma), _u_block(Y, V, lam_y, gamma)),
        ]
        for M, (loss, grad, scale) in blocks:
            worst_grad = max(worst_grad, np.linalg.norm(grad(M)) / scale(M))
            base = loss(M)
            for _ in range(100):
                D = rng.standard_normal(M.shape)
                D *= 1e-3 / np.linalg.norm(D)
                if loss(M + D) < base:
                    decreases += 1
    passed = worst_grad <= 1e-6 and decreases == 0
    record(
        3,
        "closed-form P/U updates are stationary minimizers",
        passed,
        f"max scaled gradient {worst_grad:.2e} (<=1e-6), {decreases} of 8000 perturbations decreased the loss",
    )


def test_criterion_04_b_positive_definite_and_guard(synthetic, trained_default):
    _, report = trained_default
    min_eig = min(report.min_eig_B)
    data, prepped, _ = synthetic
    tr = data.train_idx
    raised = False
    try:
        train(prepped.X[:, tr], prepped.Y[:, tr], Hyperparams(beta=1e9, max_iters=3))
    except ConfigurationError:
        raised = True
    passed = min_eig > 0 and len(report.min_eig_B) == report.iterations_run and raised
    record(
        4,
        "positive-definite B, huge beta rejected",
        passed,
        f"min eig(B) over {len(report.min_eig_B)} iterations {min_eig:.4g} (>0), beta=1e9 raised ConfigurationError: {raised}",
    )


def test_criterion_05_end_to_end_synthetic_retrieval(synthetic):
    data, _, _ = synthetic
    run = synthetic_run(synthetic, 32, 0)
    chance = shuffled_map(data.labels[data.query_idx], data.labels[data.train_idx], n_shuffles=20, seed=0)
    maps = run["maps"]
    passed = min(maps.values()) >= 0.30 and abs(chance - 0.10) <= 0.02 and run["elapsed"] < 60.0
    record(
        5,
        "synthetic cross-modal retrieval",
        passed,
        f"MAP i2t {maps['i2t']:.4f}, t2i {maps['t2i']:.4f} (>=0.30), chance {chance:.4f} (0.10+-0.02), "
        f"train+encode+eval {run['elapsed']:.1f}s single-threaded (<60s)",
    )


@pytest.mark.slow
def test_criterion_06_longer_codes_do_not_hurt(synthetic):
    means = {}
    for H in (16, 64):
        runs = [synthetic_run(synthetic, H, s)["maps"] for s in SEEDS]
        means[H] = {task: float(np.mean([r[task] for r in runs])) for task in ("i2t", "t2i")}
    passed = all(means[64][t] >= means[16][t] - 0.02 for t in ("i2t", "t2i"))
    record(
        6,
        "code-length trend over 5 seeds",
        passed,
        ", ".join(f"{t}: H=16 {means[16][t]:.4f} / H=64 {means[64][t]:.4f}" for t in ("i2t", "t2i")),
    )


def test_criterion_07_paired_codes_agree(synthetic, trained_default):
    data, _, _ = synthetic
    model, _ = trained_default
    cx = encode(model.P_x, model.mean_x, data.X)
    cy = encode(model.P_y, model.mean_y, data.Y)
    N = data.X.shape[1]
    paired = np.mean([hamming(cx[i], cy[i]) for i in range(N)])
    rng = np.random.default_rng(707)
    i = rng.integers(0, N, 10_000)
    j = (i + rng.integers(1, N, 10_000)) % N
    mismatched = np.mean([hamming(cx[a], cy[b]) for a, b in zip(i, j)])
    margin = 0.05 * model.H
    record(
        7,
        "paired codes closer than mismatched pairs",
        mismatched - paired >= margin,
        f"paired {paired:.3f} bits, mismatched {mismatched:.3f} bits, gap {mismatched - paired:.3f} (>={margin:.2f})",
    )


@pytest.mark.slow
def test_criterion_08_convergence_within_200_iterations(synthetic):
    reports = [synthetic_run(synthetic, 32, s)["report"] for s in SEEDS]
    converged = [r.converged for r in reports]
    detail = ", ".join(
        f"seed {s}: {'converged at ' + str(r.iterations_run) if r.converged else 'not converged after ' + str(r.iterations_run)}"
        for s, r in zip(SEEDS, reports)
    )
    record(8, "convergence within 200 iterations in >=4 of 5 seeds", sum(converged) >= 4, detail)


def test_criterion_09_wiki_reproduction():
    desc = "Wiki reproduction at H=16 (dataset-gated)"
    path = os.environ.get(WIKI_ENV)
    if not path:
        ACCEPTANCE_RESULTS[9] = ("SKIP", desc, f"set {WIKI_ENV} to a dataset directory to run")
        pytest.skip(f"{WIKI_ENV} not set")
    data = load_dataset(path)
    tr, qr = data.train_idx, data.query_idx
    prepped, stats = normalize_center(data, train_idx=tr)
    maps = {"i2t": [], "t2t": []}
    for seed in range(20):
        model, _ = train(
            prepped.X[:, tr], prepped.Y[:, tr], Hyperparams(H=16, seed=seed), mean_x=stats.mean_x, mean_y=stats.mean_y
        )
        qx = encode(model.P_x, model.mean_x, data.X[:, qr])
        qy = encode(model.P_y, model.mean_y, data.Y[:, qr])
        dy = encode(model.P_y, model.mean_y, data.Y[:, tr])
        lq, ld = data.labels[qr], data.labels[tr]
        maps["i2t"].append(evaluate_retrieval(qx, dy, lq, ld)["map"])
        maps["t2t"].append(evaluate_retrieval(qy, dy, lq, ld)["map"])
    i2t, t2t = float(np.mean(maps["i2t"])), float(np.mean(maps["t2t"]))
    passed = abs(i2t - 0.2432) <= 0.03 and abs(t2t - 0.5244) <= 0.03
    record(9, desc, passed, f"i2t {i2t:.4f} (0.2432+-0.03), t2t {t2t:.4f} (0.5244+-0.03)")


def test_criterion_10_metric_unit_suite():
    rng = np.random.default_rng(1010)
    ap = average_precision([1, 0, 1])
    ap_ok = abs(ap - 5.0 / 6.0) <= 1e-12
    bounds_ok = True
    monotone_ok = True
    for _ in range(200):
        rel = (rng.random((int(rng.integers(1, 8)), int(rng.integers(1, 60)))) < rng.uniform(0.05, 0.9)).astype(int)
        m = mean_average_precision(rel)
        bounds_ok &= 0.0 <= m <= 1.0
        for r in rel:
            if r.any():
                curve = precision_recall(r)
                monotone_ok &= bool(np.all(np.diff(curve.precision) <= 0))
    bounds_ok &= mean_average_precision([[0, 0, 0]]) == 0.0 and mean_average_precision([[1, 1, 1]]) == 1.0
    record(
        10,
        "metric unit suite",
        ap_ok and bounds_ok and monotone_ok,
        f"AP(1,0,1)={ap!r} (5/6 to 1e-12), MAP within [0,1]: {bounds_ok}, interpolated PR non-increasing: {monotone_ok}",
    )
