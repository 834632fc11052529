"""End-to-end acceptance suite.

Each test covers one release criterion and prints a single PASS/FAIL line
with the measured quantity next to its tolerance. The mask-ablation test
trains on a 2,000-consumer dataset and dominates the suite's runtime.
"""

import math
import os
import time
import warnings

import numpy as np
import pytest

from theftdetect import model as M
from theftdetect import tensor as T
from theftdetect.dataio import SynthConfig, generate_synthetic
from theftdetect.metrics import f1_confusion, map_at_k, roc_auc
from theftdetect.preprocess import QuantileUniform, dataset_to_samples
from theftdetect.stats import Histogram, autocorrelation, kl_divergence, kpss_level, moments
from theftdetect.tensor import Tensor
from theftdetect.train import TrainConfig, aggregate, run_training, train_model, _MinMax

from conftest import fd_gradcheck

N_THREADS = min(5, os.cpu_count() or 1)


def report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_gradient_integrity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0

    def check(loss, tensors, sample=None):
        nonlocal worst
        worst = max(worst, fd_gradcheck(loss, tensors, sample=sample))

    def scalarize(out, rng):
        c = T.tensor(rng.normal(size=out.shape))
        return T.tsum(T.mul(out, c))

    # one finite-difference check per tensor operation
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    row = Tensor(rng.normal(size=(3,)), requires_grad=True)
    check(lambda: scalarize(T.add(a, row), np.random.default_rng(1)), [a, row])
    check(lambda: scalarize(T.mul(a, b), np.random.default_rng(2)), [a, b])

    m1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    m2 = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    check(lambda: scalarize(T.matmul(m1, m2), np.random.default_rng(3)), [m1, m2])
    mb1 = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    mb2 = Tensor(rng.normal(size=(2, 4, 5)), requires_grad=True)
    check(lambda: scalarize(T.matmul(mb1, mb2), np.random.default_rng(4)), [mb1, mb2])

    lw = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    lb = Tensor(rng.normal(size=(5,)), requires_grad=True)
    lx = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    check(lambda: scalarize(T.linear(lx, lw, lb), np.random.default_rng(5)), [lx, lw, lb])

    cx = Tensor(rng.normal(size=(2, 2, 6, 7)), requires_grad=True)
    ck = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    check(
        lambda: scalarize(
            T.conv2d(cx, ck, stride=2, dilation=2, padding=2),
            np.random.default_rng(6),
        ),
        [cx, ck],
        sample=20,
    )

    sx = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    check(lambda: scalarize(T.softmax(sx), np.random.default_rng(7)), [sx])

    px = Tensor(rng.normal(size=(2, 3, 4, 5)) + 0.5, requires_grad=True)
    pa = Tensor(np.array([0.25, 0.3, 0.2]), requires_grad=True)
    check(lambda: scalarize(T.prelu(px, pa), np.random.default_rng(8)), [px, pa], sample=20)

    nx = Tensor(rng.normal(size=(2, 3, 5)), requires_grad=True)
    ng = Tensor(rng.normal(size=(5,)), requires_grad=True)
    nb = Tensor(rng.normal(size=(5,)), requires_grad=True)
    check(lambda: scalarize(T.layer_norm(nx, ng, nb), np.random.default_rng(9)), [nx, ng, nb])

    ce_x = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    ce_y = np.array([0, 1, 1, 0])
    check(lambda: T.cross_entropy(ce_x, ce_y), [ce_x])

    c1 = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    c2 = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    check(lambda: scalarize(T.concat([c1, c2], axis=1), np.random.default_rng(10)), [c1, c2])

    tx = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    check(lambda: scalarize(T.transpose(tx, (1, 0, 2)), np.random.default_rng(11)), [tx])
    check(lambda: scalarize(T.reshape(tx, (6, 4)), np.random.default_rng(12)), [tx])
    check(lambda: scalarize(T.slice_(tx, (slice(0, 1), slice(1, 3))), np.random.default_rng(13)), [tx])
    check(lambda: T.tsum(tx), [tx])
    check(lambda: T.tmean(tx), [tx])

    # both full models, two window heights, batch of 2
    labels = np.array([0, 1])
    for weeks in (6, 10):
        x = Tensor(np.random.default_rng(20 + weeks).normal(size=(2, 2, weeks, 7)))
        hp = M.init_hybrid(1, weeks)
        check(
            lambda: T.cross_entropy(M.hybrid_model_forward(x, hp), labels),
            [t for _, t in hp.named()],
            sample=4,
        )
        cp = M.init_cnn(1, weeks)
        check(
            lambda: T.cross_entropy(M.cnn_forward(x, cp), labels),
            [t for _, t in cp.named()],
            sample=4,
        )

    elapsed = time.perf_counter() - t0
    report(
        "gradient integrity",
        worst < 1e-4 and elapsed < 120,
        f"max rel err {worst:.2e} (tol 1e-4), runtime {elapsed:.0f}s (budget 120s)",
    )


def test_attention_contract():
    rng = np.random.default_rng(7)
    D = 7
    shapes_ok = True
    for C in (1, 2, 3, 4):
        for cbar, L in ((1, 2), (2, 5), (8, 3), (16, 6)):
            x = Tensor(rng.normal(size=(C, L, D)))
            ws = [Tensor(rng.normal(size=(C * D, cbar * D))) for _ in range(3)]
            out = M.attention_forward(x, *ws)
            shapes_ok &= out.shape == (cbar, L, D)

    # row-stochastic softmax weights, checked per head
    C, L, cbar = 2, 6, 4
    x = rng.normal(size=(C, L, D))
    wq = rng.normal(size=(C * D, cbar * D))
    wk = rng.normal(size=(C * D, cbar * D))
    X = x.transpose(1, 0, 2).reshape(L, C * D)
    obq = (X @ wq).reshape(L, cbar, D).transpose(1, 0, 2)
    obk = (X @ wk).reshape(L, cbar, D).transpose(1, 0, 2)
    row_err = 0.0
    for h in range(cbar):
        scores = obq[h] @ obk[h].T / np.sqrt(D)
        w = np.exp(scores - scores.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        row_err = max(row_err, float(np.max(np.abs(w.sum(axis=1) - 1.0))))

    # single-position identity and zero-query averaging
    one = M.attention_forward(
        Tensor(np.array([[[3.0]]])), *[Tensor(np.array([[1.0]]))] * 3
    )
    identity_ok = abs(one.data[0, 0, 0] - 3.0) < 1e-15
    avg = M.attention_forward(
        Tensor(np.array([[[1.0], [5.0]]])),
        Tensor(np.array([[0.0]])),
        Tensor(np.array([[1.0]])),
        Tensor(np.array([[1.0]])),
    )
    uniform_ok = np.allclose(avg.data, [[[3.0], [3.0]]], atol=1e-15)

    report(
        "attention contract",
        shapes_ok and row_err < 1e-12 and identity_ok and uniform_ok,
        f"16/16 shape configs, max row-sum err {row_err:.1e} (tol 1e-12), "
        f"identity and uniform cases exact",
    )


def pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def direct_map_at_k(scores, labels, k):
    order = np.argsort(-scores, kind="stable")[:k]
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / hits if hits else 0.0


def test_metric_oracles():
    rng = np.random.default_rng(99)
    sk = pytest.importorskip("sklearn.metrics")
    auc_err = map_err = f1_err = 0.0
    for _ in range(200):
        n = int(rng.integers(4, 51))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.random(n), 1)  # coarse grid forces ties
        auc, _ = roc_auc(scores, labels)
        auc_err = max(auc_err, abs(auc - pairwise_auc(scores, labels)))
        k = int(rng.integers(1, n + 1))
        map_err = max(map_err, abs(map_at_k(scores, labels, k) - direct_map_at_k(scores, labels, k)))
    for _ in range(50):
        n = int(rng.integers(4, 51))
        labels = rng.integers(0, 2, size=n)
        scores = rng.random(n)
        f1, p, r, _ = f1_confusion(scores, labels, 0.5)
        pred = (scores >= 0.5).astype(int)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ref = sk.f1_score(labels, pred, zero_division=0)
        f1_err = max(f1_err, abs(f1 - ref))
    report(
        "metric oracles",
        auc_err < 1e-12 and map_err < 1e-12 and f1_err < 1e-12,
        f"AUC vs pairwise oracle err {auc_err:.1e}, MAP@K err {map_err:.1e}, "
        f"F1 err {f1_err:.1e} (tol 1e-12, 200/200/50 instances)",
    )


def test_preprocessing_contract():
    rng = np.random.default_rng(3)
    col = rng.lognormal(mean=1.0, sigma=1.5, size=5000)
    t = QuantileUniform().fit(col.reshape(-1, 1))
    y = t.transform_column(0, col)
    ys = np.sort(y)
    n = ys.size
    cdf = np.arange(1, n + 1) / n
    ks = max(np.max(np.abs(cdf - ys)), np.max(np.abs(ys - (cdf - 1 / n))))
    _, _, skew, kurt = moments(y)
    xs = np.sort(rng.lognormal(size=200))
    monotone = bool(np.all(np.diff(t.transform_column(0, xs)) >= 0))
    in_range = 0.0 <= y.min() and y.max() <= 1.0

    ds = generate_synthetic(SynthConfig(n_consumers=250, seed=10))
    mask_ok = True
    for s in dataset_to_samples(ds):
        mask_ok &= set(np.unique(s.mask)) <= {0.0, 1.0}
        mask_ok &= bool(np.all(s.values[s.mask == 1.0] == 0.0))
    report(
        "preprocessing contract",
        in_range and monotone and ks < 0.1 and abs(skew) < 0.5 and kurt < 0 and mask_ok,
        f"output in [0,1], monotone, KS {ks:.3f} (tol 0.1), |skew| {abs(skew):.3f} "
        f"(tol 0.5), excess kurtosis {kurt:.3f} (< 0), mask invariants on 250 records",
    )


def test_statistics_contract():
    edges = np.array([0.0, 0.5, 1.0])
    p = Histogram(edges, np.array([0.5, 0.5]))
    q = Histogram(edges, np.array([0.25, 0.75]))
    self_kl = kl_divergence(p, p)
    val = kl_divergence(p, q)
    expect = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    kl_ok = self_kl == 0.0 and abs(val - expect) < 1e-6 and round(val, 5) == 0.14384

    stattools = pytest.importorskip("statsmodels.tsa.stattools")
    rng = np.random.default_rng(2024)
    kpss_err, kpss_agree = 0.0, True
    for i in range(20):
        T_len = int(rng.integers(80, 600))
        xs = rng.normal(size=T_len) if i % 2 == 0 else np.cumsum(rng.normal(size=T_len))
        lag = int(4 * (T_len / 100.0) ** 0.25)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ref_stat, _, _, crit = stattools.kpss(xs, regression="c", nlags=lag)
        stat, stationary = kpss_level(xs)
        kpss_err = max(kpss_err, abs(stat - ref_stat))
        kpss_agree &= stationary == (ref_stat < crit["5%"])
        kpss_agree &= stationary == (i % 2 == 0)

    t = np.arange(140)
    acf = autocorrelation(np.sin(2 * np.pi * t / 7), 12)
    acf_ok = acf[0] == 1.0 and acf[7] > max(acf[5], acf[6], acf[8], acf[9])

    report(
        "statistics contract",
        kl_ok and kpss_err < 1e-6 and kpss_agree and acf_ok,
        f"self-KL 0, example {val:.5f} nats, KPSS max err {kpss_err:.1e} vs "
        f"reference on 20 series, period-7 autocorrelation peak found",
    )


def test_mask_ablation_auc():
    t0 = time.perf_counter()
    ds = generate_synthetic(SynthConfig(n_consumers=2000, seed=42))
    aucs = {}
    for mode in ("binary_mask", "zeros_only"):
        cfg = TrainConfig(model="hybrid", epochs=20, folds=5, seed=7, mask_mode=mode)
        results = train_model(ds, cfg, n_threads=N_THREADS)
        aucs[mode] = aggregate(results)["auc"]
    elapsed = time.perf_counter() - t0
    gap = aucs["binary_mask"] - aucs["zeros_only"]
    report(
        "mask ablation",
        aucs["binary_mask"] >= 0.85 and gap >= 0.02 and elapsed < 1800,
        f"binary_mask AUC {aucs['binary_mask']:.4f} (floor 0.85), "
        f"advantage over zeros_only {gap:.4f} (floor 0.02), "
        f"runtime {elapsed:.0f}s (budget 1800s)",
    )


def test_overfit_capacity():
    from theftdetect.estimators import ConvNetClassifier, HybridAttentionClassifier

    ds = generate_synthetic(SynthConfig(n_consumers=200, seed=8))
    y = ds.labels()
    thief = np.nonzero(y == 1)[0][:4]
    normal = np.nonzero(y == 0)[0][:28]
    sub = ds.subset(np.concatenate([thief, normal]))
    t = _MinMax().fit(np.stack([r.readings for r in sub.records]))
    samples = dataset_to_samples(sub, "binary_mask", t)
    X = np.stack([s.channels() for s in samples])
    yy = np.array([s.label for s in samples])

    epochs_used = {}
    for name, cls in (("hybrid", HybridAttentionClassifier), ("cnn", ConvNetClassifier)):
        hit = {"epoch": None}

        def on_epoch(clf, epoch, loss):
            if hit["epoch"] is None:
                auc, _ = roc_auc(clf.decision_scores(X), yy)
                if auc == 1.0:
                    hit["epoch"] = epoch

        clf = cls(epochs=50, batch_size=16, seed=1, epoch_callback=on_epoch)
        clf.fit(X, yy)
        epochs_used[name] = hit["epoch"]
    ok = all(e is not None for e in epochs_used.values())
    report(
        "overfit capacity",
        ok,
        f"training AUC 1.0 on 32 consumers within 50 epochs: "
        f"hybrid at epoch {epochs_used['hybrid']}, cnn at epoch {epochs_used['cnn']}",
    )


def test_run_determinism(tmp_path):
    ds = generate_synthetic(SynthConfig(n_consumers=300, seed=12, n_days=28))
    cfg = TrainConfig(model="hybrid", epochs=2, folds=2, seed=3)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        run_training(ds, cfg, out, n_threads=2)
    names = sorted(p.name for p in outs[0].iterdir())
    identical = all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
    )
    report(
        "run determinism",
        identical and "fold0_best.bin" in names and "fold0_log.json" in names,
        f"{len(names)} artifacts byte-identical across two runs "
        f"(logs, reports, checkpoints)",
    )
