"""Timestep-conditioned regression net mapping (x_t, t) back to x_0.

The timestep enters through a compact sinusoidal embedding concatenated
with the noisy features; training minimizes MSE and keeps the
best-validation checkpoint.  The bundle is bound to its diffusion
schedule by checksum.

Two heads are available.  ``direct`` regresses x_0 itself; with
uniform timesteps its loss is dominated by the late, high-noise pairs
and the early steps underfit badly (the net can end up worse than the
identity at t = 1).  The default ``noise_scaled`` head regresses the
normalized correction (x_0 - x_t) / sqrt(1 - abar_t) and reconstructs
x_0-hat = x_t + sqrt(1 - abar_t) * f(x_t, t): targets are unit-scale at
every timestep, so each step gets an equal say and near-clean inputs
start from the identity.
"""

from dataclasses import dataclass

import numpy as np

from pnmf import neuralkit as nk
from pnmf.diffusion import DiffusionSchedule, PairSet
from pnmf.errors import BadConfig, ScheduleMismatch

DEFAULT_EMBED_DIM = 16
DEFAULT_HIDDEN = 96
HEADS = ("noise_scaled", "direct")


@dataclass
class DenoiserBundle:
    net: nk.NetModel
    embed_dim: int
    schedule_ref: int
    head: str = "noise_scaled"
    train_log: nk.TrainLog | None = None


def embed_time(t, dim: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """Sinusoidal embedding: slot 2i = sin(t/10000^(2i/dim)), 2i+1 = cos.

    Vectorized over t: an array input returns one row per timestep.
    """
    if dim % 2 != 0 or dim < 2:
        raise BadConfig("embedding dim must be even and >= 2")
    if np.any(np.asarray(t) < 0):
        raise BadConfig("t must be >= 0")
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    i2 = np.arange(0, dim, 2, dtype=np.float64)
    angles = t[:, None] / np.power(10000.0, i2 / dim)[None, :]
    emb = np.empty((t.size, dim))
    emb[:, 0::2] = np.sin(angles)
    emb[:, 1::2] = np.cos(angles)
    return emb[0] if scalar else emb


def default_stack(feature_dim: int, embed_dim: int = DEFAULT_EMBED_DIM,
                  hidden: int = DEFAULT_HIDDEN):
    d_in = feature_dim + embed_dim
    return [
        nk.dense(d_in, hidden),
        nk.relu(hidden),
        nk.dense(hidden, hidden),
        nk.relu(hidden),
        nk.dense(hidden, feature_dim),
    ]


def _net_input(xt_cols: np.ndarray, ts, embed_dim: int) -> np.ndarray:
    """Rows of [x_t, embed(t)] from column-aligned pairs."""
    emb = embed_time(np.asarray(ts, dtype=np.float64), embed_dim)
    return np.concatenate([np.asarray(xt_cols, dtype=np.float64).T, emb], axis=1)


def _noise_scale(ts, schedule: DiffusionSchedule) -> np.ndarray:
    return np.sqrt(1.0 - schedule.alpha_bar[np.asarray(ts, dtype=np.int64) - 1])


def train_denoiser(pairs: PairSet, val_pairs: PairSet, config: nk.TrainConfig,
                   schedule: DiffusionSchedule,
                   embed_dim: int = DEFAULT_EMBED_DIM, hidden: int = DEFAULT_HIDDEN,
                   head: str = "noise_scaled") -> DenoiserBundle:
    """Fit the denoiser on (x_t, t) -> x_0 pairs, best-val-MSE checkpoint."""
    if head not in HEADS:
        raise BadConfig(f"unknown denoiser head {head!r}")
    if pairs.x0.shape[1] == 0:
        raise BadConfig("empty pair set")
    if pairs.schedule_checksum != val_pairs.schedule_checksum:
        raise ScheduleMismatch("training and validation pairs use different schedules")
    if schedule.checksum() != pairs.schedule_checksum:
        raise ScheduleMismatch("pairs were not generated with this schedule")
    feature_dim = pairs.x0.shape[0]
    model = nk.init_model(default_stack(feature_dim, embed_dim, hidden), seed=config.seed)
    x = _net_input(pairs.xt, pairs.t, embed_dim)
    xv = _net_input(val_pairs.xt, val_pairs.t, embed_dim)
    if head == "noise_scaled":
        y = ((pairs.x0 - pairs.xt) / _noise_scale(pairs.t, schedule)).T
        yv = ((val_pairs.x0 - val_pairs.xt) / _noise_scale(val_pairs.t, schedule)).T
    else:
        y = np.asarray(pairs.x0, dtype=np.float64).T
        yv = np.asarray(val_pairs.x0, dtype=np.float64).T
    net, log = nk.train(model, x, y, "mse", config, val_data=xv, val_targets=yv)
    return DenoiserBundle(net=net, embed_dim=embed_dim,
                          schedule_ref=pairs.schedule_checksum,
                          head=head, train_log=log)


def denoise(bundle: DenoiserBundle, xt, t, schedule: DiffusionSchedule) -> np.ndarray:
    """Single forward pass producing x0-hat columns for x_t columns.

    ``xt`` is dims x samples; ``t`` a scalar or one timestep per column.
    Rejects schedules other than the one the bundle was trained on.
    """
    if schedule.checksum() != bundle.schedule_ref:
        raise ScheduleMismatch("denoiser was trained on a different schedule")
    xt = np.asarray(xt, dtype=np.float64)
    one_col = xt.ndim == 1
    if one_col:
        xt = xt.reshape(-1, 1)
    ts = np.broadcast_to(np.asarray(t, dtype=np.int64), (xt.shape[1],))
    if np.any(ts < 1) or np.any(ts > schedule.T):
        raise BadConfig(f"t must lie in [1, {schedule.T}]")
    out = nk.forward(bundle.net, _net_input(xt, ts, bundle.embed_dim)).T
    if bundle.head == "noise_scaled":
        out = xt + _noise_scale(ts, schedule) * out
    return out[:, 0] if one_col else out


def per_timestep_errors(bundle: DenoiserBundle, pairs: PairSet,
                        schedule: DiffusionSchedule):
    """Mean noisy and denoised L2 errors per timestep present in the set.

    Returns (timesteps, noisy_err, denoised_err) arrays for plot export
    and the error-reduction checks.
    """
    xhat = denoise(bundle, pairs.xt, pairs.t, schedule)
    noisy = np.linalg.norm(pairs.xt - pairs.x0, axis=0)
    den = np.linalg.norm(xhat - pairs.x0, axis=0)
    ts = np.unique(pairs.t)
    noisy_mean = np.array([noisy[pairs.t == t].mean() for t in ts])
    den_mean = np.array([den[pairs.t == t].mean() for t in ts])
    return ts, noisy_mean, den_mean
