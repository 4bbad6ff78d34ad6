import numpy as np
import pytest

from satgraph.linalg import Rng
from satgraph.metrics import (ConfusionMatrix, average_ranks,
                              classification_metrics, confusion,
                              report_from_scores, roc_auc, spearman)


def pairwise_auc(scores, labels):
    """O(n^2) oracle: fraction of (pos, neg) pairs ranked correctly."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (pos.shape[0] * neg.shape[0])


class TestConfusion:
    def test_perfect_agreement(self):
        cm = confusion([1, 0, 1], [1, 0, 1])
        assert (cm.tp, cm.tn, cm.fp, cm.fn) == (2, 1, 0, 0)

    def test_all_misses(self):
        cm = confusion([0, 0, 0, 0], [1, 1, 1, 1])
        assert cm.fn == 4 and cm.tp == 0

    def test_mixed_hand_count(self):
        cm = confusion([1, 1, 0, 0], [1, 0, 0, 1])
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (1, 1, 1, 1)
        assert cm.total == 4

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([1, 0], [1])

    def test_non_binary_label(self):
        with pytest.raises(ValueError):
            confusion([1, 2], [1, 0])


class TestClassificationMetrics:
    def test_perfect(self):
        acc, prec, f1 = classification_metrics(confusion([1, 0, 1], [1, 0, 1]))
        assert (acc, prec, f1) == (1.0, 1.0, 1.0)

    def test_uniform_confusion_is_one_half(self):
        acc, prec, f1 = classification_metrics(ConfusionMatrix(1, 1, 1, 1))
        assert (acc, prec, f1) == (0.5, 0.5, 0.5)

    def test_no_positive_predictions_convention(self):
        acc, prec, f1 = classification_metrics(confusion([0, 0], [1, 0]))
        assert prec == 0.0 and f1 == 0.0
        assert acc == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            classification_metrics(ConfusionMatrix(0, 0, 0, 0))

    def test_agrees_with_direct_recount(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 40))
            pred = rng.integers(0, 2, n)
            true = rng.integers(0, 2, n)
            cm = confusion(pred, true)
            acc, prec, f1 = classification_metrics(cm)
            assert acc == pytest.approx(float((pred == true).mean()))
            tp = int(((pred == 1) & (true == 1)).sum())
            pp = int((pred == 1).sum())
            ap = int((true == 1).sum())
            p = tp / pp if pp else 0.0
            r = tp / ap if ap else 0.0
            assert prec == pytest.approx(p)
            assert f1 == pytest.approx(2 * p * r / (p + r) if p + r else 0.0)


class TestAverageRanks:
    def test_distinct_values(self):
        assert average_ranks([0.3, 0.1, 0.2]).tolist() == [3.0, 1.0, 2.0]

    def test_ties_share_mean_rank(self):
        # two copies at ranks 2 and 3 -> both 2.5
        assert average_ranks([0.5, 0.2, 0.2, 0.1]).tolist() == [4.0, 2.5, 2.5, 1.0]

    def test_all_equal(self):
        assert average_ranks([1.0] * 5).tolist() == [3.0] * 5


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0

    def test_perfectly_inverted(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_half_by_pair_count(self):
        assert roc_auc([0.9, 0.2, 0.8, 0.1], [1, 0, 0, 1]) == pytest.approx(0.5)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_auc([0.4, 0.6], [1, 1])

    def test_matches_pairwise_oracle_with_ties(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 51))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # quantized scores force duplicates and cross-class ties
            scores = np.round(rng.random(n) * 4) / 4
            fast = roc_auc(scores, labels)
            slow = pairwise_auc(scores, labels)
            assert abs(fast - slow) < 1e-12
            assert 0.0 <= fast <= 1.0

    def test_invariant_under_monotone_transform(self, rng):
        for _ in range(20):
            n = int(rng.integers(4, 30))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = rng.random(n)
            base = roc_auc(scores, labels)
            assert roc_auc(np.exp(3 * scores), labels) == pytest.approx(base, abs=1e-12)
            assert roc_auc(2 * scores - 5, labels) == pytest.approx(base, abs=1e-12)


class TestSpearman:
    def test_perfect_monotone(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_perfect_inverse(self):
        assert spearman([1, 2, 3, 4], [5, 4, 3, 2]) == pytest.approx(-1.0)

    def test_constant_side_is_nan(self):
        assert np.isnan(spearman([1, 1, 1], [1, 2, 3]))


class TestMetricsReport:
    def test_from_scores_thresholds_at_half(self):
        rep = report_from_scores(np.array([0.9, 0.5, 0.4, 0.1]),
                                 np.array([1, 1, 0, 0]))
        assert rep.confusion.tp == 2 and rep.confusion.tn == 2
        assert rep.accuracy == 1.0 and rep.auc == 1.0
        assert rep.n_items == 4

    def test_single_class_auc_is_none_with_note(self):
        rep = report_from_scores(np.array([0.9, 0.8]), np.array([1, 1]))
        assert rep.auc is None
        assert any("auc" in n.lower() for n in rep.notes)

    def test_bounds_on_random_instances(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 40))
            labels = rng.integers(0, 2, n)
            rep = report_from_scores(rng.random(n), labels)
            for v in (rep.accuracy, rep.precision, rep.f1):
                assert 0.0 <= v <= 1.0
            if rep.auc is not None:
                assert 0.0 <= rep.auc <= 1.0

    def test_round_trips_to_dict_and_csv(self):
        rep = report_from_scores(np.array([0.9, 0.1]), np.array([1, 0]))
        d = rep.to_dict()
        assert d["accuracy"] == 1.0 and d["n_items"] == 2
        row = rep.csv_row()
        assert row.split(",") == ["1.0", "1.0", "1.0", "1.0", "2"]
