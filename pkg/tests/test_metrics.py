"""Metric fixtures and identities, with a trapezoidal ROC oracle."""

import math

import numpy as np
import pytest

from pnmf import metrics
from pnmf.errors import EmptyClass, ShapeError


def roc_trapezoid_oracle(p, y):
    """Threshold-sweep ROC curve integrated by trapezoids."""
    p = np.asarray(p, float)
    y = np.asarray(y, int)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    thresholds = np.concatenate([[np.inf], np.unique(p)[::-1]])
    pts = []
    for th in thresholds:
        pred = p >= th
        tpr = np.sum(pred & (y == 1)) / n_pos
        fpr = np.sum(pred & (y == 0)) / n_neg
        pts.append((fpr, tpr))
    pts.append((1.0, 1.0))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


class TestBrier:
    def test_perfect(self):
        assert metrics.brier([1.0, 0.0], [1, 0]) == 0.0

    def test_max_entropy(self):
        assert metrics.brier([0.5] * 8, [1, 0] * 4) == 0.25

    def test_fixture(self):
        assert metrics.brier([0.8, 0.3], [1, 0]) == pytest.approx(0.065, abs=1e-12)

    def test_equals_one_hot_mse(self):
        rng = np.random.default_rng(0)
        p = rng.random(20)
        y = rng.integers(0, 2, 20)
        onehot = np.stack([1 - y, y], axis=1)
        probs = np.stack([1 - p, p], axis=1)
        assert metrics.brier(p, y) == pytest.approx(
            float(np.mean(np.sum((probs - onehot) ** 2, axis=1))) / 2
        )

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            metrics.brier([0.5], [1, 0])


class TestLogLoss:
    def test_perfect_is_near_zero(self):
        assert metrics.log_loss([1.0, 0.0], [1, 0]) <= 2e-7

    def test_half_is_ln2(self):
        assert metrics.log_loss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2), rel=1e-12)

    def test_fixture(self):
        assert metrics.log_loss([0.8, 0.3], [1, 0]) == pytest.approx(0.2899, abs=1e-4)

    def test_wrong_confident_worse_than_unsure(self):
        # moving a confidently wrong prediction toward 0.5 lowers the loss
        assert metrics.log_loss([0.99], [0]) > metrics.log_loss([0.6], [0])

    def test_finite_at_certainty(self):
        assert np.isfinite(metrics.log_loss([1.0, 0.0], [0, 1]))


class TestMcc:
    def test_perfect(self):
        assert metrics.mcc(5, 0, 0, 5) == 1.0

    def test_total_disagreement(self):
        assert metrics.mcc(0, 5, 5, 0) == -1.0

    def test_fixture(self):
        assert metrics.mcc(3, 1, 2, 4) == pytest.approx(10 / math.sqrt(600), rel=1e-12)
        assert metrics.mcc(3, 1, 2, 4) == pytest.approx(0.4082, abs=1e-4)

    def test_degenerate_flagged_zero(self):
        assert metrics.mcc(0, 0, 3, 4) == 0.0
        assert metrics.mcc_is_degenerate(0, 0, 3, 4)
        assert not metrics.mcc_is_degenerate(3, 1, 2, 4)

    def test_sign_flips_on_complement(self):
        assert metrics.mcc(4, 2, 1, 5) == pytest.approx(-metrics.mcc(1, 5, 4, 2))


class TestBalancedAccuracy:
    def test_perfect(self):
        assert metrics.balanced_accuracy(5, 0, 0, 7) == 1.0

    def test_fixture(self):
        assert metrics.balanced_accuracy(3, 1, 2, 4) == 0.7

    def test_coin_flip_near_half(self):
        rng = np.random.default_rng(1)
        y = np.array([0, 1] * 500)
        pred = rng.integers(0, 2, 1000)
        from pnmf.classifier import confusion

        c = confusion(y, pred)
        assert metrics.balanced_accuracy(**c) == pytest.approx(0.5, abs=0.05)

    def test_empty_class(self):
        with pytest.raises(EmptyClass):
            metrics.balanced_accuracy(0, 0, 0, 5)


class TestRocAuc:
    def test_perfect_and_reversed(self):
        assert metrics.roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
        assert metrics.roc_auc([0.1, 0.2, 0.9], [1, 1, 0]) == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_trapezoid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 40))
        p = np.round(rng.random(n), 2)  # ties included
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        assert metrics.roc_auc(p, y) == pytest.approx(roc_trapezoid_oracle(p, y), abs=1e-9)

    def test_complement_identity(self):
        rng = np.random.default_rng(11)
        p = rng.random(25)
        y = rng.integers(0, 2, 25)
        y[:2] = [0, 1]
        assert metrics.roc_auc(p, y) + metrics.roc_auc(1 - p, y) == pytest.approx(1.0)


class TestAssembleTable:
    def _runs(self):
        rng = np.random.default_rng(2)
        runs = {}
        for tag in metrics.MODEL_TAGS:
            y = rng.integers(0, 2, 40)
            y[:2] = [0, 1]
            p = np.clip(rng.random(40) * 0.8 + y * 0.2, 0, 1)
            preds = (p >= 0.5).astype(int)
            runs[tag] = (p, preds, y)
        return runs

    def test_all_columns_present(self):
        table = metrics.assemble_table(self._runs())
        for tag in metrics.MODEL_TAGS:
            assert set(table.rows[tag]) == set(metrics.TABLE_COLUMNS)

    def test_accuracy_consistent_with_confusion(self):
        from pnmf.classifier import confusion

        runs = self._runs()
        table = metrics.assemble_table(runs)
        for tag, (p, preds, y) in runs.items():
            c = confusion(y, preds)
            assert table.rows[tag]["Acc"] == metrics.accuracy(**c)

    def test_f1_consistency(self):
        table = metrics.assemble_table(self._runs())
        for row in table.rows.values():
            prec, rec = row["Prec"], row["Rec"]
            expect = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
            assert row["F1"] == pytest.approx(expect)

    def test_subset_of_tags_allowed(self):
        runs = self._runs()
        partial = {"Clean_Baseline": runs["Clean_Baseline"]}
        table = metrics.assemble_table(partial)
        assert list(table.rows) == ["Clean_Baseline"]

    def test_csv_json_emitted(self, tmp_path):
        table = metrics.assemble_table(self._runs())
        table.to_csv(tmp_path / "t.csv")
        table.to_json(tmp_path / "t.json")
        header = (tmp_path / "t.csv").read_text().splitlines()[0]
        assert header == "Model," + ",".join(metrics.TABLE_COLUMNS)
