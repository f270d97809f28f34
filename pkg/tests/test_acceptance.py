"""One test per acceptance criterion; each prints a PASS/FAIL line with the measured quantity."""
import json
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from riplab.classical import (
    ConvergenceWarning, dual_objective, kkt_violations, rbf_matrix, smo, smote, train_binary_svm, train_ovr,
)
from riplab.data import GenConfig, generate_synthetic, write_dataset
from riplab.data.dataset import resolve_splits
from riplab.data.ripf import DataError, decode, encode
from riplab.metrics import MetricCounts, accuracy, confusion_matrix, maneuver_counts, maneuver_prf
from riplab.runs import MODEL_DEFAULTS, TRAIN_DEFAULTS, build_model, resolve_config, train_run, eval_run
from riplab.ssm import ssd_scan, ssd_scan_chunked
from riplab.tensor import Tensor
from riplab.train import Optimizer, TrainConfig, accuracy_on, train_step
from riplab.bench import default_jobs, run_bench

import test_classical
import test_functional
import test_models
import test_ssm
import test_tensor
from conftest import separable_samples

GOLDEN = Path(__file__).parent / "golden"


def verdict(n, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------------------

def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    checks = 0
    for seed in range(10):
        for name in test_tensor.UNARY:
            test_tensor.test_unary_ops_grad_check(name, seed)
        test_tensor.test_concat_stack_where_grad_check(seed)
        test_tensor.test_batched_matmul_gradients(np.random.default_rng(seed))
        for fn in (test_functional.F.silu, test_functional.F.softplus, test_functional.F.softmax,
                   test_functional.F.log_softmax, lambda x: test_functional.F.leaky_relu(x, 0.01)):
            test_functional.test_activation_grads(fn, seed)
        for check in (test_functional.test_conv_grads, test_functional.test_dense_conv_grads,
                      test_functional.test_layer_norm_grads, test_functional.test_pool_grads,
                      test_functional.test_xent_grads, test_functional.test_lstm_grads,
                      test_functional.test_gru_grads, test_functional.test_batch_norm_grads,
                      test_ssm.test_block_grads):
            check(seed)
        for chunked in (False, True):
            test_ssm.test_scan_grads(seed, chunked)
        for name in ("mamba", "ensemble", "cnn_single", "cnn_multi", "baseline_single", "baseline_multi"):
            test_models.test_model_grad_check(name, seed)
        checks += len(test_tensor.UNARY) + 3 + 5 + 9 + 2 + 6
    dt = time.perf_counter() - t0
    verdict(1, dt < 120, f"{checks} grad checks over 10 seeds at rel tol 1e-4 in {dt:.1f} s (limit 120 s)")


# 2 ---------------------------------------------------------------------------------------

def test_criterion_2_scan_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    r = np.random.default_rng(0)
    for T in (1, 7, 64, 256):
        ins = test_ssm.scan_inputs(r, T)
        ref = ssd_scan(*ins).data
        for chunk in sorted({1, 2, 7, T}):
            worst = max(worst, float(np.max(np.abs(ssd_scan_chunked(*ins, chunk=chunk).data - ref))))
    dt = time.perf_counter() - t0
    verdict(2, worst < 1e-10 and dt < 30, f"max |chunked - sequential| = {worst:.2e} (tol 1e-10) in {dt:.1f} s")


# 3 ---------------------------------------------------------------------------------------

def test_criterion_3_metric_oracles():
    ok = maneuver_prf(MetricCounts(1, 1, 1, 1)) == (1 / 3, 1 / 3, 1 / 3)
    ok &= maneuver_counts([1, 2, 1, 0], [1, 1, 0, 1]) == MetricCounts(1, 1, 1, 1)
    ok &= maneuver_prf(MetricCounts(tp=4)) == (1.0, 1.0, 1.0)
    ok &= maneuver_prf(MetricCounts()) == (0.0, 0.0, 0.0)
    r = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        n = int(r.integers(1, 80))
        p, t = r.integers(0, 6, n), r.integers(0, 6, n)
        cm = confusion_matrix(p, t)
        mismatches += accuracy(p, t) != np.trace(cm) / cm.sum()
    verdict(3, ok and mismatches == 0, f"hand fixtures exact: {ok}; accuracy != trace/total on {mismatches}/1000 pairs")


# 4 ---------------------------------------------------------------------------------------

def test_criterion_4_svm():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    m = train_binary_svm(X, y, C=10.0, gamma=2.0)
    xor_acc = float(np.mean(np.sign(m.decision(X)) == y))

    gaps = []
    for C in (0.5, 2.0, 10.0):
        P = np.array([[0.0, 0.0], [1.0, 0.2], [0.4, 0.9]])
        yp = np.array([1.0, 1.0, -1.0])
        K = rbf_matrix(P, P, 0.8)
        alpha, _, _ = smo(K, yp, C, tol=1e-9)
        gaps.append(abs(dual_objective(alpha, yp, K) - test_classical.grid_dual_max(K, yp, C)))

    Xm, ym = test_classical.toy_multiclass(0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        model = train_ovr(Xm, ym, 6, C=1.0, tol=1e-3)
    K = rbf_matrix(Xm, Xm, model.gamma)
    bad = 0
    for c, mach in enumerate(model.machines):
        if mach is None:
            continue
        yc = np.where(ym == c, 1.0, -1.0)
        alpha = np.zeros(len(ym))
        alpha[mach.support] = mach.dual_coef * yc[mach.support]
        bad += kkt_violations(alpha, yc, (alpha * yc) @ K + mach.bias, mach.C, 1e-3)
    ok = xor_acc == 1.0 and max(gaps) < 1e-6 and bad == 0
    verdict(4, ok, f"XOR train acc {xor_acc:.2f}; 3-point dual gap {max(gaps):.1e} (tol 1e-6); "
                   f"KKT violations across OvR machines {bad}")


# 5 ---------------------------------------------------------------------------------------

def test_criterion_5_smote():
    r = np.random.default_rng(0)
    y = np.repeat(np.arange(6), [40, 25, 17, 9, 4, 12])
    X = r.standard_normal((len(y), 7)) + y[:, None]
    Xb, yb, rep = smote(X, y, 5, np.random.default_rng(1))
    counts = np.bincount(yb)
    synth = Xb[len(X):]
    recon = X[rep.parent] + rep.coef[:, None] * (X[rep.neighbor] - X[rep.parent])
    err = float(np.max(np.abs(synth - recon)))
    same_class = bool(np.all(y[rep.parent] == y[rep.neighbor]))
    ok = len(set(counts)) == 1 and err <= 1e-12 and same_class
    verdict(5, ok, f"class counts after SMOTE {counts.tolist()}; max provenance error {err:.1e} (tol 1e-12)")


# 6 ---------------------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("method,task", [("mamba2", "single"), ("mamba2", "multi"), ("cnn_lstm", "single"),
                                         ("cnn_lstm", "multi"), ("baseline", "single"), ("baseline", "multi")])
def test_criterion_6_capacity(method, task):
    train = separable_samples(32, dim=16, seed=11)
    model = build_model(method, task, 16, MODEL_DEFAULTS[method], seed=0)
    cfg = TrainConfig.from_dict(TRAIN_DEFAULTS[method])
    opt = Optimizer(model.parameters(), cfg)
    rng = np.random.default_rng(0)
    acc, epoch = accuracy_on(model, train), 0
    while acc < 1.0 and epoch < 200:
        model.train()
        order = rng.permutation(len(train))
        for i in range(0, len(order), cfg.batch_size):
            train_step(model, opt, [train[j] for j in order[i:i + cfg.batch_size]], cfg.lr)
        epoch += 1
        acc = accuracy_on(model, train)
    verdict(6, acc == 1.0, f"{method}/{task} train acc {acc:.3f} after {epoch} epochs (limit 200)")


# 7 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_synthetic_bench(tmp_path):
    ds, _ = generate_synthetic(GenConfig(), seed=7)
    write_dataset(ds, tmp_path / "data")
    test = resolve_splits(ds, 0)["test"]
    majority = 100.0 * np.bincount(test.labels()).max() / len(test)
    jobs = default_jobs()
    res = run_bench(tmp_path / "data", tmp_path / "bench", seed=0, jobs=jobs)
    table = res["summary"]["table1"]
    for method, row in table.items():
        for task, cell in row.items():
            print(f"  {method:9s} {task:6s} acc {cell['acc']:6.2f}  f1 {cell['f1']:6.2f}")
    worst = min(cell["acc"] for row in table.values() for cell in row.values())
    wall = res["wall_seconds"]
    ok = worst >= majority + 15.0 and wall < 1800
    verdict(7, ok, f"lowest test acc {worst:.2f} vs majority {majority:.2f} + 15; "
                   f"bench wall {wall / 60:.1f} min with {jobs} job(s) (limit 30 min)")


# 8 ---------------------------------------------------------------------------------------

def test_criterion_8_hyperparameter_fidelity():
    diffs = []
    for method in ("mamba2", "cnn_lstm"):
        resolved, _ = resolve_config({"method": method, "dataset": "unused"})
        golden = json.loads((GOLDEN / f"resolved_{method}.json").read_text())
        for section in ("model", "train"):
            if resolved[section] != golden[section]:
                diffs.append(f"{method}.{section}")
    verdict(8, not diffs, f"resolved defaults differing from golden files: {diffs or 'none'}")


# 9 ---------------------------------------------------------------------------------------

SMALL = {
    "mamba2": {"model": {"d_model": 8, "n_blocks": 1, "expand": 2, "n_heads": 2, "d_state": 4}, "train": {"epochs": 2}},
    "cnn_lstm": {"model": {"conv_channels": 4, "hidden": 4}, "train": {"epochs": 2}},
    "baseline": {"model": {"hidden": 4}, "train": {"epochs": 2}},
    "svm": {"model": {"k_frames": 4}},
}


def test_criterion_9_determinism(tiny_dataset_dir, tmp_path):
    differing = []
    for method, extra in SMALL.items():
        for task in ("single", "multi"):
            blobs = []
            for rep in ("a", "b"):
                out = tmp_path / f"{method}_{task}_{rep}"
                resolved, _ = resolve_config({"method": method, "task": task, "dataset": str(tiny_dataset_dir),
                                              "out": str(out), "seed": 3, **extra})
                train_run(resolved)
                eval_run(out, tiny_dataset_dir, "test")
                blobs.append([(out / f).read_bytes() for f in ("model.ripc", "report_test.json")])
            if blobs[0] != blobs[1]:
                differing.append(f"{method}/{task}")
    verdict(9, not differing, f"runs with differing checkpoint or report bytes: {differing or 'none'}")


# 10 --------------------------------------------------------------------------------------

def test_criterion_10_ripf_header_fuzz():
    frames = np.arange(15, dtype=np.float32).reshape(3, 5)
    good = encode(frames)
    typed = crashes = accepted = 0
    for pos in range(14):
        for val in range(256):
            if good[pos] == val:
                continue
            buf = bytearray(good)
            buf[pos] = val
            for kwargs in ({}, {"expect_dim": 5, "expect_T": 3}):
                try:
                    decode(bytes(buf), **kwargs)
                    accepted += 1
                except DataError:
                    typed += 1
                except Exception:
                    crashes += 1
    verdict(10, crashes == 0 and accepted == 0,
            f"{typed} mutations rejected with DataError, {accepted} accepted, {crashes} crashes")
