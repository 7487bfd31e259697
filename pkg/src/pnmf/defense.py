"""Test-time purification: forward-noise at a chosen step, denoise, classify.

Predictions average probabilities over K seeded noise draws; every draw
comes from a stream keyed by (seed_base, "purify", sample, draw), so the
defended pipeline is deterministic for a fixed seed base yet stochastic
in distribution when the base is resampled.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from pnmf import classifier as cls
from pnmf import tensorstore as ts
from pnmf.denoiser import DenoiserBundle, denoise
from pnmf.diffusion import DiffusionSchedule
from pnmf.errors import BadConfig, CorruptFile
from pnmf.parallel import thread_map
from pnmf.rng import gaussians, keyed_rng


@dataclass
class DefenseConfig:
    t_pur: int = 10
    K: int = 8
    seed_base: int = 0

    def validate(self, T: int):
        if not 1 <= self.t_pur <= T:
            raise BadConfig(f"t_pur must lie in [1, {T}]")
        if self.K < 1:
            raise BadConfig("K must be >= 1")


def purify(x, cfg: DefenseConfig, den: DenoiserBundle, schedule: DiffusionSchedule,
           sample_index: int, draw_index: int) -> np.ndarray:
    """One purification draw: noise x to t_pur and denoise back."""
    x = np.asarray(x, dtype=np.float64)
    rng = keyed_rng(cfg.seed_base, "purify", sample_index, draw_index)
    eps = gaussians(rng, x.size)
    abar = schedule.alpha_bar[cfg.t_pur - 1]
    xt = np.sqrt(abar) * x + np.sqrt(1.0 - abar) * eps
    return denoise(den, xt, cfg.t_pur, schedule)


def _purified_batch(X, cfg, den, schedule, draw_index, threads=1):
    """Purify all columns for one draw index (keyed per sample)."""
    X = np.asarray(X, dtype=np.float64)
    dim, n = X.shape
    eps = np.empty((dim, n))

    def fill(i):
        rng = keyed_rng(cfg.seed_base, "purify", i, draw_index)
        eps[:, i] = gaussians(rng, dim)

    thread_map(fill, n, threads)
    abar = schedule.alpha_bar[cfg.t_pur - 1]
    xt = np.sqrt(abar) * X + np.sqrt(1.0 - abar) * eps
    return denoise(den, xt, cfg.t_pur, schedule)


def predict_defended(X, cfg: DefenseConfig, den: DenoiserBundle,
                     schedule: DiffusionSchedule, clf: cls.ClassifierBundle,
                     threads: int = 1) -> np.ndarray:
    """EOT prediction: mean class probabilities over K purification draws.

    Draw results land in fixed slots before averaging, so the output
    does not depend on the order draws are evaluated in (or on the
    worker count).
    """
    cfg.validate(schedule.T)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    probs = np.empty((cfg.K, n, 2))
    for k in range(cfg.K):
        probs[k] = cls.predict_proba(clf, _purified_batch(X, cfg, den, schedule, k, threads))
    return probs.mean(axis=0)


BUNDLE_TENSORS = {
    "X_test": "X_test",
    "labels": "labels",
    "clean_probs": "probs",
    "defended_probs": "probs",
}


def export_eval_bundle(X_test, labels, defended_probs, clean_probs, out_dir,
                       clf: cls.ClassifierBundle, den: DenoiserBundle,
                       schedule: DiffusionSchedule, cfg: DefenseConfig):
    """Write the defended test bundle a third party needs to re-run attacks.

    Tensors plus a manifest enumerating every role and the checksums of
    the classifier weights, denoiser weights, schedule, and defense
    config in force.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "X_test": np.asarray(X_test, dtype=np.float64),
        "labels": np.asarray(labels, dtype=np.float64).reshape(1, -1),
        "clean_probs": np.asarray(clean_probs, dtype=np.float64),
        "defended_probs": np.asarray(defended_probs, dtype=np.float64),
    }
    tensors = {}
    for name, arr in arrays.items():
        manifest = ts.write_tensor(
            arr, name=name, role=BUNDLE_TENSORS[name],
            created_by=f"defense:seed={cfg.seed_base}", path=out_dir / f"{name}.pnmf"
        )
        tensors[name] = manifest.checksum
    meta = {
        "roles": sorted(BUNDLE_TENSORS),
        "tensors": tensors,
        "classifier_weights_checksum": ts.payload_checksum(clf.net.weights.reshape(1, -1)),
        "denoiser_weights_checksum": ts.payload_checksum(den.net.weights.reshape(1, -1)),
        "schedule_checksum": schedule.checksum(),
        "defense": asdict(cfg),
        "selected_indices": list(clf.selected_indices),
    }
    with open(out_dir / "bundle.manifest.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def load_eval_bundle(bundle_dir):
    """Read a bundle back, verifying tensor checksums against the manifest."""
    bundle_dir = Path(bundle_dir)
    with open(bundle_dir / "bundle.manifest.json") as fh:
        meta = json.load(fh)
    arrays = {}
    for name in meta["roles"]:
        m, manifest = ts.read_tensor(bundle_dir / f"{name}.pnmf")
        if manifest.checksum != meta["tensors"][name]:
            raise CorruptFile(f"bundle tensor {name!r} does not match its manifest entry")
        arrays[name] = m
    return arrays, meta
