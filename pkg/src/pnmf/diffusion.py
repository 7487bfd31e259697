"""Forward diffusion over feature space: linear schedule and (x_t, x_0) pairs.

The schedule is the shared constant between pair generation, denoiser
training, and test-time purification; its checksum binds a trained
denoiser to the exact constants it saw.
"""

from dataclasses import dataclass, field

import numpy as np

from pnmf._kernels import fnv1a64
from pnmf.errors import BadConfig
from pnmf.rng import gaussians, keyed_rng

DEFAULT_T = 50
DEFAULT_BETA_1 = 1e-4
DEFAULT_BETA_T = 0.02


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def checksum(self) -> int:
        return fnv1a64(np.asarray(self.beta, dtype="<f8").tobytes())


@dataclass
class DiffusionPair:
    x0: np.ndarray
    xt: np.ndarray
    t: int
    eps: np.ndarray
    sample_index: int


@dataclass
class PairSet:
    """Column-aligned pair tensors: X0, XT (dims x pairs) and t per pair."""

    x0: np.ndarray
    xt: np.ndarray
    t: np.ndarray
    sample_index: np.ndarray
    schedule_checksum: int = 0


def build_schedule(T: int = DEFAULT_T, beta_1: float = DEFAULT_BETA_1,
                   beta_T: float = DEFAULT_BETA_T) -> DiffusionSchedule:
    """Linear noise schedule beta_1..beta_T over T steps.

    alpha_bar[t-1] is the running product of (1 - beta) up to step t.
    """
    if T < 2:
        raise BadConfig("schedule needs at least 2 steps")
    if not 0.0 < beta_1 <= beta_T < 1.0:
        raise BadConfig("need 0 < beta_1 <= beta_T < 1")
    beta = beta_1 + (beta_T - beta_1) * np.arange(T, dtype=np.float64) / (T - 1)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return DiffusionSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def q_sample(x0, t: int, schedule: DiffusionSchedule, rng):
    """Noised vector at step t: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

    Returns (xt, eps) with eps drawn from the given stream; storing eps
    makes the construction identity exactly reproducible.
    """
    if not 1 <= t <= schedule.T:
        raise BadConfig(f"t must lie in [1, {schedule.T}]")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = gaussians(rng, x0.size).reshape(x0.shape)
    abar = schedule.alpha_bar[t - 1]
    xt = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
    return xt, eps


def expected_noise_energy(x0_norm_sq: float, dim: int, t: int,
                          schedule: DiffusionSchedule) -> float:
    """Closed-form E||xt - x0||^2 = (1-sqrt(abar))^2 ||x0||^2 + (1-abar) dim."""
    abar = schedule.alpha_bar[t - 1]
    return (1.0 - np.sqrt(abar)) ** 2 * x0_norm_sq + (1.0 - abar) * dim


def generate_pairs(X, schedule: DiffusionSchedule, pairs_per_sample: int,
                   seed: int, fixed_t: int | None = None) -> PairSet:
    """One (x_t, x_0) pair per sample per repetition.

    Timesteps are uniform on {1..T} unless ``fixed_t`` pins them (used
    for exported example figures).  Every pair draws from the stream
    keyed by (seed, "diffusion", sample, repetition), so generation is
    a pure function of (features, schedule, seed) and is safe to
    parallelize per sample.
    """
    X = np.asarray(X, dtype=np.float64)
    dim, n = X.shape
    total = n * pairs_per_sample
    x0 = np.empty((dim, total))
    xt = np.empty((dim, total))
    ts = np.empty(total, dtype=np.int64)
    sample_index = np.empty(total, dtype=np.int64)
    col = 0
    for i in range(n):
        for rep in range(pairs_per_sample):
            rng = keyed_rng(seed, "diffusion", i, rep)
            if fixed_t is None:
                t = int(rng.integers(1, schedule.T + 1))
            else:
                t = int(fixed_t)
            xt_col, _ = q_sample(X[:, i], t, schedule, rng)
            x0[:, col] = X[:, i]
            xt[:, col] = xt_col
            ts[col] = t
            sample_index[col] = i
            col += 1
    return PairSet(x0=x0, xt=xt, t=ts, sample_index=sample_index,
                   schedule_checksum=schedule.checksum())


def noise_energy_curve(X, schedule: DiffusionSchedule, draws: int, seed: int) -> np.ndarray:
    """Monte-Carlo mean ||xt - x0||^2 per timestep over the given columns."""
    if draws < 1:
        raise BadConfig("draws must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    curve = np.zeros(schedule.T)
    for t in range(1, schedule.T + 1):
        acc = 0.0
        for d in range(draws):
            rng = keyed_rng(seed, "noise-curve", t, d)
            i = int(rng.integers(0, n))
            xt, _ = q_sample(X[:, i], t, schedule, rng)
            acc += float(np.sum((xt - X[:, i]) ** 2))
        curve[t - 1] = acc / draws
    return curve
