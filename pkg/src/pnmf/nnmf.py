"""Non-negative matrix factorization under the generalized KL divergence.

Factorizes V (features x samples) as W H with multiplicative updates,
projects held-out samples onto the fixed basis with non-negative least
squares, and L2-normalizes feature columns for the downstream stages.
"""

from dataclasses import dataclass, field

import numpy as np

from pnmf import _kernels
from pnmf.errors import DegenerateInput, ShapeError, ZeroVector
from pnmf.rng import keyed_rng

DEFAULT_RANK = 15
DEFAULT_ITERS = 300
EPSILON_FLOOR = 1e-9
REL_TOL = 1e-6


@dataclass
class FactorModel:
    """Trained factorization: basis, training coefficients, iteration log."""

    W: np.ndarray
    H_train: np.ndarray
    rank: int
    divergence: str = "KL"
    epsilon_floor: float = EPSILON_FLOOR
    iter_log: list = field(default_factory=list)


@dataclass
class FeatureSet:
    """Per-sample feature columns with labels and a split tag."""

    X: np.ndarray
    labels: np.ndarray
    split: str
    normalized: bool = False


def kl_divergence(V, W, H, eps: float = EPSILON_FLOOR) -> float:
    """Generalized KL divergence between V and the reconstruction W @ H.

    Computes sum(V * log(V / WH) - V + WH) with 0*log 0 = 0 and WH
    floored at ``eps``.  Zero for an exact factorization, positive
    otherwise.
    """
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if W.shape[1] != H.shape[0] or V.shape != (W.shape[0], H.shape[1]):
        raise ShapeError(
            f"non-conformable shapes V{V.shape}, W{W.shape}, H{H.shape}"
        )
    V = np.ascontiguousarray(V)
    WH = np.ascontiguousarray(W @ H)
    return _kernels.kl_div(V, WH, eps)


def fit(
    V,
    rank: int = DEFAULT_RANK,
    iters: int = DEFAULT_ITERS,
    seed: int = 0,
    tol: float = REL_TOL,
) -> FactorModel:
    """Fit V ~= W H by alternating multiplicative updates.

    W and H start from seeded Uniform(0.1, 1.1) draws; each iteration
    applies the basis update then the coefficient update with
    denominators and reconstruction entries floored at the epsilon
    floor.  The objective is recorded after every iteration, and the
    loop stops early once its relative improvement drops below ``tol``
    (pass ``tol=0`` to always run the full budget).
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    if V.ndim != 2:
        raise ShapeError(f"V must be 2-D, got ndim={V.ndim}")
    if rank < 1 or iters < 1:
        raise ShapeError("rank and iters must be >= 1")
    if not (V > 0).any():
        raise DegenerateInput("V is all zeros; nothing to factorize")
    if (V < 0).any():
        raise DegenerateInput("V has negative entries")

    K, N = V.shape
    rng = keyed_rng(seed, "nnmf-init")
    W = np.ascontiguousarray(0.1 + rng.random((K, rank)))
    H = np.ascontiguousarray(0.1 + rng.random((rank, N)))

    log = []
    prev = None
    for _ in range(iters):
        W, H = _kernels.kl_update(V, W, H, EPSILON_FLOOR)
        obj = _kernels.kl_div(V, np.ascontiguousarray(W @ H), EPSILON_FLOOR)
        log.append(obj)
        if tol > 0 and prev is not None and abs(prev - obj) <= tol * max(abs(prev), 1e-30):
            break
        prev = obj
    return FactorModel(W=W, H_train=H, rank=rank, iter_log=log)


def project(W, V_new, iters: int = 2000, tol: float = 1e-8) -> np.ndarray:
    """Project columns of V_new onto the fixed basis W with NNLS.

    Minimizes ||v - W h||^2 subject to h >= 0 per column via projected
    gradient with step 1/L, L = ||W^T W||_F; runs until the relative
    objective change falls below ``tol`` or ``iters`` is reached.
    """
    W = np.ascontiguousarray(W, dtype=np.float64)
    V_new = np.asarray(V_new, dtype=np.float64)
    one_col = V_new.ndim == 1
    if one_col:
        V_new = V_new.reshape(-1, 1)
    if V_new.shape[0] != W.shape[0]:
        raise ShapeError(
            f"row count mismatch: W has {W.shape[0]} rows, V_new has {V_new.shape[0]}"
        )
    V_new = np.ascontiguousarray(V_new)
    WtW = np.ascontiguousarray(W.T @ W)
    WtV = np.ascontiguousarray(W.T @ V_new)
    vsq = np.ascontiguousarray(np.sum(V_new * V_new, axis=0))
    L = float(np.linalg.norm(WtW, "fro"))
    if L <= 0.0:
        raise DegenerateInput("basis W is all zeros")
    H = _kernels.nnls_pg(WtW, WtV, vsq, 1.0 / L, int(iters), float(tol))
    return H[:, 0] if one_col else H


def l2_normalize(X) -> np.ndarray:
    """Divide every column by its L2 norm.

    Raises ZeroVector naming the first offending column if any column
    has zero norm.
    """
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(f"column {int(zero[0])} has zero norm")
    return X / norms
