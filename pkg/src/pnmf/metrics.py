"""Classification and probabilistic metrics, plus the comparison table.

Tumor (label 1) is the positive class throughout.  Rate metrics with an
empty denominator follow the 0 convention so table rows stay totally
ordered; the degenerate case is flagged where the caller can see it.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pnmf import featstats
from pnmf.errors import EmptyClass, ShapeError

LOGLOSS_CLIP = 1e-7

TABLE_COLUMNS = ("Acc", "Prec", "Rec", "F1", "MCC", "BalAcc", "ROC-AUC", "Brier", "LogLoss")
MODEL_TAGS = ("Clean_Baseline", "Clean_Defended", "Robust_Baseline", "Robust_Defended")


def _check_lengths(p, y):
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {y.shape}")
    return p, y.astype(np.float64)


def brier(p, y) -> float:
    """Mean squared error of tumor probabilities against binary labels."""
    p, y = _check_lengths(p, y)
    return float(np.mean((p - y) ** 2))


def log_loss(p, y, clip: float = LOGLOSS_CLIP) -> float:
    """Negative mean log-likelihood with probabilities clamped to
    [clip, 1-clip] so certainly-wrong predictions stay finite."""
    p, y = _check_lengths(p, y)
    if not 0.0 < clip < 0.5:
        raise ShapeError("clip must lie in (0, 0.5)")
    pc = np.clip(p, clip, 1.0 - clip)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def mcc(TP: int, FP: int, FN: int, TN: int) -> float:
    """Matthews correlation; 0 when any marginal is empty (flagged)."""
    denom2 = (TP + FP) * (TP + FN) * (TN + FP) * (TN + FN)
    if denom2 == 0:
        return 0.0
    return float((TP * TN - FP * FN) / np.sqrt(denom2))


def mcc_is_degenerate(TP: int, FP: int, FN: int, TN: int) -> bool:
    return (TP + FP) * (TP + FN) * (TN + FP) * (TN + FN) == 0


def balanced_accuracy(TP: int, FP: int, FN: int, TN: int) -> float:
    """(sensitivity + specificity) / 2."""
    if TP + FN == 0 or TN + FP == 0:
        raise EmptyClass("balanced accuracy needs both classes present")
    return 0.5 * (TP / (TP + FN) + TN / (TN + FP))


def roc_auc(p, y) -> float:
    """Mann-Whitney statistic over tumor probabilities."""
    p, y = _check_lengths(p, y)
    pos = p[y == 1]
    neg = p[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise EmptyClass("both classes needed for ROC-AUC")
    return featstats.auc(pos, neg)


def accuracy(TP: int, FP: int, FN: int, TN: int) -> float:
    return (TP + TN) / (TP + FP + FN + TN)


def precision(TP: int, FP: int) -> float:
    return TP / (TP + FP) if TP + FP else 0.0


def recall(TP: int, FN: int) -> float:
    return TP / (TP + FN) if TP + FN else 0.0


def f1_score(prec: float, rec: float) -> float:
    return 2 * prec * rec / (prec + rec) if prec + rec else 0.0


def metric_row(probs, preds, labels) -> dict:
    """All nine table metrics from tumor probabilities, hard predictions,
    and true labels."""
    from pnmf.classifier import confusion

    c = confusion(labels, preds)
    prec = precision(c["TP"], c["FP"])
    rec = recall(c["TP"], c["FN"])
    return {
        "Acc": accuracy(**c),
        "Prec": prec,
        "Rec": rec,
        "F1": f1_score(prec, rec),
        "MCC": mcc(**c),
        "BalAcc": balanced_accuracy(**c),
        "ROC-AUC": roc_auc(probs, labels),
        "Brier": brier(probs, labels),
        "LogLoss": log_loss(probs, labels),
    }


@dataclass
class MetricTable:
    rows: dict  # tag -> {column -> value}

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("Model",) + TABLE_COLUMNS)
            for tag, row in self.rows.items():
                writer.writerow([tag] + [f"{row[c]:.6f}" for c in TABLE_COLUMNS])

    def to_json(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.rows, fh, indent=2)
            fh.write("\n")


def assemble_table(runs: dict) -> MetricTable:
    """Metric rows for each run tag.

    ``runs`` maps a model tag to (tumor_probs, preds, labels); the four
    canonical tags are expected for the full comparison but a subset is
    allowed, e.g. before the attack stage has run.
    """
    rows = {}
    for tag, (probs, preds, labels) in runs.items():
        rows[tag] = metric_row(probs, preds, labels)
    return MetricTable(rows=rows)
