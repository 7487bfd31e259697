"""Lightweight network over the selected, normalized factor features.

The default stack runs a 1-D convolution across the ranked feature
sequence; a dense-only stack is selectable for comparison.  Tumor is
the positive class with a fixed 0.5 decision threshold.
"""

from dataclasses import dataclass, field

import numpy as np

from pnmf import neuralkit as nk
from pnmf.errors import BadConfig, ShapeError

CLASS_NAMES = ("normal", "tumor")


@dataclass
class ClassifierBundle:
    net: nk.NetModel
    selected_indices: list
    class_names: tuple = CLASS_NAMES
    threshold: float = 0.5
    train_log: nk.TrainLog | None = None


def conv_layers(M: int) -> list:
    if M < 3:
        raise BadConfig("need at least 3 features for the kernel-3 convolution")
    conv = nk.conv1d(1, 8, 3, 1, M)
    width = conv.out_dim
    return [
        conv,
        nk.relu(width),
        nk.flatten(width),
        nk.dense(width, 32),
        nk.relu(32),
        nk.dense(32, 2),
        nk.softmax(2),
    ]


def dense_layers(M: int) -> list:
    return [
        nk.dense(M, 32),
        nk.relu(32),
        nk.dense(32, 32),
        nk.relu(32),
        nk.dense(32, 2),
        nk.softmax(2),
    ]


def build_default(M: int, seed: int = 0) -> nk.NetModel:
    """conv1d(1->8, k3, s1) -> relu -> flatten -> dense(32) -> relu -> dense(2) -> softmax."""
    return nk.init_model(conv_layers(M), seed=seed)


def select_features(X, selected_indices) -> np.ndarray:
    """Reorder/slice feature rows by the train-split ranking."""
    X = np.asarray(X, dtype=np.float64)
    return X[np.asarray(selected_indices, dtype=int), :]


def train_classifier(X_train, labels_train, X_val, labels_val, selection,
                     config: nk.TrainConfig, arch: str = "conv"):
    """Train on selected train features, checkpointing on val accuracy.

    ``X_*`` are full feature matrices (components x samples); the
    selection's indices are applied here so downstream callers only
    ever see selected inputs.  Returns (ClassifierBundle, TrainLog).
    """
    selected = list(selection.selected)
    M = len(selected)
    xt = select_features(X_train, selected).T
    xv = select_features(X_val, selected).T
    if arch == "conv":
        layers = conv_layers(M)
    elif arch == "dense":
        layers = dense_layers(M)
    else:
        raise BadConfig(f"unknown classifier arch {arch!r}")
    model = nk.init_model(layers, seed=config.seed)
    net, log = nk.train(
        model, xt, np.asarray(labels_train).astype(int), "cross_entropy", config,
        val_data=xv, val_targets=np.asarray(labels_val).astype(int),
    )
    return ClassifierBundle(net=net, selected_indices=selected, train_log=log), log


def predict_proba(bundle: ClassifierBundle, X_selected) -> np.ndarray:
    """Probability rows (samples x 2) for selected-feature columns."""
    X_selected = np.asarray(X_selected, dtype=np.float64)
    if X_selected.shape[0] != len(bundle.selected_indices):
        raise ShapeError(
            f"expected {len(bundle.selected_indices)} selected features, "
            f"got {X_selected.shape[0]}"
        )
    return nk.forward(bundle.net, X_selected.T)


def predict_labels(bundle: ClassifierBundle, X_selected) -> np.ndarray:
    probs = predict_proba(bundle, X_selected)
    return (probs[:, 1] >= bundle.threshold).astype(int)


def confusion(labels, predictions) -> dict:
    """Counts {TP, FP, FN, TN} with tumor (1) as positive."""
    labels = np.asarray(labels).astype(int)
    predictions = np.asarray(predictions).astype(int)
    if labels.shape != predictions.shape:
        raise ShapeError("labels and predictions must have equal length")
    return {
        "TP": int(np.sum((labels == 1) & (predictions == 1))),
        "FP": int(np.sum((labels == 0) & (predictions == 1))),
        "FN": int(np.sum((labels == 1) & (predictions == 0))),
        "TN": int(np.sum((labels == 0) & (predictions == 0))),
    }
