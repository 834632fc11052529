import numpy as np
import pytest

from theftdetect.metrics import (
    MetricError,
    build_report,
    f1_confusion,
    map_at_k,
    roc_auc,
    threshold_sweep,
)


def pairwise_auc(scores, labels):
    """O(n^2) counting oracle: thief-normal pairs, ties get half credit."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
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


def map_oracle(ranked_labels, k):
    """Direct evaluation of the top-K mean-average-precision formula."""
    r = ranked_labels[:k]
    total = sum(r)
    if total == 0:
        return 0.0
    acc = 0.0
    for i in range(1, len(r) + 1):
        acc += r[i - 1] * (sum(r[:i]) / i)
    return acc / total


class TestRocAuc:
    def test_perfect_separation(self):
        auc, _ = roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert auc == 1.0

    def test_all_ties_give_half(self):
        auc, _ = roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert auc == 0.5

    def test_matches_pairwise_oracle_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(4, 51))
            labels = np.zeros(n, dtype=int)
            labels[: max(1, int(rng.integers(1, n)))] = 1
            rng.shuffle(labels)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            # quantized scores force ties
            scores = np.round(rng.random(n), 1)
            auc, _ = roc_auc(scores, labels)
            assert auc == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    def test_roc_points_endpoints_and_monotone(self):
        rng = np.random.default_rng(3)
        scores = rng.random(30)
        labels = (rng.random(30) < 0.3).astype(int)
        labels[0], labels[1] = 0, 1
        _, pts = roc_auc(scores, labels)
        assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)
        xs, ys = zip(*pts)
        assert all(a <= b for a, b in zip(xs, xs[1:]))
        assert all(a <= b for a, b in zip(ys, ys[1:]))

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(5)
        scores = rng.random(40)
        labels = (rng.random(40) < 0.4).astype(int)
        labels[:2] = [0, 1]
        a1, _ = roc_auc(scores, labels)
        a2, _ = roc_auc(np.exp(5 * scores), labels)
        assert a1 == pytest.approx(a2, abs=1e-12)

    def test_single_class_raises(self):
        with pytest.raises(MetricError):
            roc_auc([0.1, 0.2], [1, 1])


class TestF1Confusion:
    def test_perfect(self):
        f1, p, r, c = f1_confusion([0.9, 0.1], [1, 0])
        assert (f1, p, r) == (1.0, 1.0, 1.0)
        assert c == {"tp": 1, "fp": 0, "tn": 1, "fn": 0}

    def test_no_positive_predictions(self):
        f1, p, r, _ = f1_confusion([0.1, 0.2], [1, 0], threshold=0.5)
        assert f1 == 0.0 and p == 0.0

    def test_hand_counted_case(self):
        # tp=3, fp=1, fn=2 -> P=0.75, R=0.6, F1=2/3
        scores = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1]
        labels = [1, 1, 1, 0, 1, 1]
        f1, p, r, c = f1_confusion(scores, labels)
        assert p == pytest.approx(0.75)
        assert r == pytest.approx(0.6)
        assert f1 == pytest.approx(2 / 3)
        assert c == {"tp": 3, "fp": 1, "tn": 0, "fn": 2}

    def test_counts_partition_n(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            scores = rng.random(n)
            labels = (rng.random(n) < 0.5).astype(int)
            t = float(rng.random())
            _, _, _, c = f1_confusion(scores, labels, t)
            assert c["tp"] + c["fp"] + c["tn"] + c["fn"] == n


class TestMapAtK:
    def test_top_k_all_thieves(self):
        assert map_at_k([0.9, 0.8, 0.1], [1, 1, 0], 2) == 1.0

    def test_direct_formula_110(self):
        # ranked labels [1,1,0] at K=3 -> (1/2)(1/1 + 2/2) = 1.0
        assert map_at_k([0.9, 0.8, 0.7], [1, 1, 0], 3) == pytest.approx(1.0)

    def test_direct_formula_01(self):
        # ranked labels [0,1] at K=2 -> (1/1)(1/2) = 0.5
        assert map_at_k([0.9, 0.8], [0, 1], 2) == pytest.approx(0.5)

    def test_no_positives_in_top_k(self):
        assert map_at_k([0.9, 0.1], [0, 1], 1) == 0.0

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            scores = np.round(rng.random(n), 2)
            labels = (rng.random(n) < 0.3).astype(int)
            k = int(rng.integers(1, n + 1))
            order = np.argsort(-scores, kind="stable")
            expect = map_oracle(list(labels[order]), k)
            assert map_at_k(scores, labels, k) == pytest.approx(expect, abs=1e-12)

    def test_all_positive_full_k_is_one(self):
        rng = np.random.default_rng(17)
        scores = rng.random(10)
        assert map_at_k(scores, np.ones(10, dtype=int), 10) == 1.0


class TestThresholdSweep:
    def test_perfect_scorer(self):
        scores = [0.9, 0.95, 0.05, 0.1]
        labels = [1, 1, 0, 0]
        sweep, best = threshold_sweep(scores, labels)
        by_t = {round(t, 2): (f1, p, r) for t, f1, p, r in sweep}
        assert by_t[round(best, 2)][0] == 1.0
        assert by_t[round(best, 2)][1:] == (1.0, 1.0)

    def test_best_at_least_as_good_as_default(self):
        rng = np.random.default_rng(19)
        scores = rng.random(50)
        labels = (rng.random(50) < 0.3).astype(int)
        labels[:2] = [0, 1]
        sweep, best = threshold_sweep(scores, labels)
        f1_best = max(f1 for _, f1, _, _ in sweep)
        f1_half = [f1 for t, f1, _, _ in sweep if abs(t - 0.5) < 1e-9][0]
        assert f1_best >= f1_half

    def test_matches_brute_force_curve(self):
        scores = np.linspace(0, 1, 21)
        labels = (scores > 0.6).astype(int)
        sweep, _ = threshold_sweep(scores, labels, step=0.01)
        assert len(sweep) == 101
        for t, f1, p, r in sweep:
            ef1, ep, er, _ = f1_confusion(scores, labels, t)
            assert (f1, p, r) == (ef1, ep, er)

    def test_tie_resolves_to_smallest_threshold(self):
        # every threshold <= 0.5 yields identical predictions
        sweep, best = threshold_sweep([0.5, 0.5], [1, 0], step=0.1)
        assert best == 0.0


class TestEvalReport:
    def test_report_roundtrip_and_csv(self, tmp_path):
        rng = np.random.default_rng(23)
        scores = rng.random(60)
        labels = (rng.random(60) < 0.3).astype(int)
        labels[:2] = [0, 1]
        rep = build_report(scores, labels)
        rep.save_json(tmp_path / "r.json")
        rep.save_roc_csv(tmp_path / "roc.csv")
        rep.save_sweep_csv(tmp_path / "sweep.csv")
        import json

        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["auc"] == rep.auc
        sweep_lines = (tmp_path / "sweep.csv").read_text().strip().split("\n")
        assert len(sweep_lines) == 102  # header + 101 grid points
        assert sweep_lines[0] == "threshold,f1,precision,recall"
        roc_lines = (tmp_path / "roc.csv").read_text().strip().split("\n")
        assert roc_lines[0] == "fpr,tpr"

    def test_confusion_partitions(self):
        rng = np.random.default_rng(29)
        scores = rng.random(30)
        labels = (rng.random(30) < 0.4).astype(int)
        labels[:2] = [0, 1]
        rep = build_report(scores, labels)
        c = rep.confusion
        assert c["tp"] + c["fp"] + c["tn"] + c["fn"] == 30
