"""Plot-data CSV emission from a completed work directory.

One CSV per figure family; all values come from stored artifacts so the
files can be regenerated at any time and plotted with any tool.
"""

import json
from pathlib import Path

import numpy as np

from pnmf import diffusion as df
from pnmf import metrics as mx
from pnmf.errors import DependencyError
from pnmf.pipeline import ARTIFACTS, Pipeline, PipelineConfig, write_csv


def emit_plots(pipe: Pipeline) -> Path:
    """Write the plot-data directory; returns its path."""
    out = pipe.work / "plots"
    out.mkdir(parents=True, exist_ok=True)

    pipe.require("W", "X_test", "labels_test", "ranking", "selection")
    labels = pipe._labels("test")
    selection = pipe._selection()

    # basis components: one row per pixel, one column per component
    W = pipe._read_matrix("W")
    write_csv(
        out / "basis_components.csv",
        ["pixel"] + [f"component_{r}" for r in range(W.shape[1])],
        [(i, *(f"{v:.6g}" for v in W[i])) for i in range(W.shape[0])],
    )

    X_test = pipe._read_matrix("X_test").astype(np.float64)
    write_csv(
        out / "feature_vector_example.csv",
        ["component", "activation"],
        [(r, f"{v:.8g}") for r, v in enumerate(X_test[:, 0])],
    )
    write_csv(
        out / "norm_histogram.csv",
        ["sample", "l2_norm"],
        [(i, f"{v:.8g}") for i, v in enumerate(np.linalg.norm(X_test, axis=0))],
    )
    write_csv(
        out / "class_mean_features.csv",
        ["component", "mean_normal", "mean_tumor"],
        [
            (r, f"{X_test[r, labels == 0].mean():.8g}", f"{X_test[r, labels == 1].mean():.8g}")
            for r in range(X_test.shape[0])
        ],
    )
    write_csv(
        out / "ranking_bars.csv",
        ["rank", "component", "auc", "abs_auc_dist"],
        [
            (rank, s.component_index, f"{s.auc:.8g}", f"{abs(s.auc - 0.5):.8g}")
            for rank, s in enumerate(selection.ranked)
        ],
    )
    write_csv(
        out / "effect_significance.csv",
        ["component", "cohens_d", "neg_log10_p"],
        [
            (s.component_index, f"{s.cohens_d:.8g}", f"{-np.log10(max(s.p_value, 5e-324)):.8g}")
            for s in selection.ranked
        ],
    )

    for name, csv_name in (
        ("clf_train_log", "training_curve_classifier.csv"),
        ("den_train_log", "training_curve_denoiser.csv"),
        ("iter_log", "nnmf_objective.csv"),
        ("per_t_error", "denoiser_error_per_t.csv"),
    ):
        src = pipe.path(name)
        if src.exists():
            (out / csv_name).write_bytes(src.read_bytes())

    # diffusion corruption curve from the stored schedule: closed form per t
    if pipe.path("schedule").exists():
        schedule = pipe._schedule()
        dim = X_test.shape[0] if not pipe.path("selection").exists() else len(selection.selected)
        rows = []
        for t in range(1, schedule.T + 1):
            rows.append((t, f"{df.expected_noise_energy(1.0, dim, t, schedule):.8g}"))
        write_csv(out / "noise_energy_curve.csv", ["t", "expected_energy_unit_norm"], rows)

    # denoiser scatter: noisy vs denoised error per held-out pair
    if pipe.path("val_pairs_x0").exists() and pipe.path("den_weights").exists():
        schedule = pipe._schedule()
        bundle = pipe._denoiser()
        pairs = pipe._read_pairs("val_pairs", schedule)
        from pnmf.denoiser import denoise

        xhat = denoise(bundle, pairs.xt, pairs.t, schedule)
        noisy = np.linalg.norm(pairs.xt - pairs.x0, axis=0)
        den_err = np.linalg.norm(xhat - pairs.x0, axis=0)
        write_csv(
            out / "denoiser_error_scatter.csv",
            ["pair", "t", "noisy_error", "denoised_error"],
            [
                (i, int(pairs.t[i]), f"{noisy[i]:.8g}", f"{den_err[i]:.8g}")
                for i in range(noisy.size)
            ],
        )

    # accuracy comparisons and metric bars from the final table
    if pipe.path("metric_table_json").exists():
        with open(pipe.path("metric_table_json")) as fh:
            rows = json.load(fh)
        acc_rows = []
        for clean_tag, robust_tag, model in (
            ("Clean_Baseline", "Robust_Baseline", "baseline"),
            ("Clean_Defended", "Robust_Defended", "defended"),
        ):
            if clean_tag in rows and robust_tag in rows:
                clean = rows[clean_tag]["Acc"]
                robust = rows[robust_tag]["Acc"]
                acc_rows.append(
                    (model, f"{clean:.6f}", f"{robust:.6f}", f"{clean - robust:.6f}")
                )
        if acc_rows:
            write_csv(
                out / "accuracy_comparison.csv",
                ["model", "clean_accuracy", "robust_accuracy", "drop"], acc_rows,
            )
        write_csv(
            out / "metric_bars.csv",
            ["model", "metric", "value"],
            [
                (tag, metric, f"{value:.6f}")
                for tag, row in rows.items()
                for metric, value in row.items()
            ],
        )
    return out
