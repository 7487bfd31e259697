"""NumPy implementations of the hot kernels.

This is the fallback backend selected when the compiled extension is not
available (see ``pnmf._kernels``).  Both backends expose the same four
functions with identical semantics; the compiled one is just faster on
the elementwise-fused passes, the per-column solver loop, and hashing.

All array arguments must be float64 and C-contiguous.
"""

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data) -> int:
    """FNV-1a 64-bit hash of a bytes-like object."""
    h = _FNV_OFFSET
    prime = _FNV_PRIME
    mask = _MASK64
    for b in bytes(data):
        h = ((h ^ b) * prime) & mask
    return h


def kl_div(V: np.ndarray, WH: np.ndarray, eps: float) -> float:
    """Generalized KL divergence sum(V*log(V/WH) - V + WH).

    Entries of ``WH`` are floored at ``eps`` and zero entries of ``V``
    contribute only their ``WH`` term (0*log 0 = 0).
    """
    WHc = np.maximum(WH, eps)
    total = float(np.sum(WHc) - np.sum(V))
    pos = V > 0.0
    vpos = V[pos]
    total += float(np.sum(vpos * np.log(vpos / WHc[pos])))
    return total


def kl_update(V: np.ndarray, W: np.ndarray, H: np.ndarray, eps: float):
    """One multiplicative-update iteration for the KL objective.

    Updates the basis first, recomputes the reconstruction, then updates
    the coefficients.  Reconstruction entries and denominators are
    floored at ``eps``.  Returns new (W, H) arrays.
    """
    ratio = V / np.maximum(W @ H, eps)
    W = W * ((ratio @ H.T) / np.maximum(H.sum(axis=1), eps))
    ratio = V / np.maximum(W @ H, eps)
    H = H * ((W.T @ ratio) / np.maximum(W.sum(axis=0), eps)[:, None])
    return W, H


def nnls_pg(
    WtW: np.ndarray,
    WtV: np.ndarray,
    vsq: np.ndarray,
    step: float,
    max_iters: int,
    tol: float,
) -> np.ndarray:
    """Projected-gradient solve of min ||v - W h||^2 s.t. h >= 0, per column.

    Works on the normal-equation form: ``WtW = W.T @ W`` (R x R),
    ``WtV = W.T @ V`` (R x N), ``vsq[j] = ||v_j||^2``.  Starts every
    column at h = 0 and iterates ``h <- max(h - step*(WtW h - Wtv), 0)``
    until the per-column objective change falls below ``tol`` relative
    to the previous objective value, or ``max_iters`` is reached.
    """
    n_cols = WtV.shape[1]
    H = np.zeros_like(WtV)
    f = vsq.astype(np.float64).copy()
    active = np.ones(n_cols, dtype=bool)
    for _ in range(max_iters):
        if not active.any():
            break
        Ha = H[:, active]
        Wa = WtV[:, active]
        grad = WtW @ Ha - Wa
        Ha = np.maximum(Ha - step * grad, 0.0)
        f_new = vsq[active] - 2.0 * np.sum(Wa * Ha, axis=0) + np.sum(Ha * (WtW @ Ha), axis=0)
        H[:, active] = Ha
        fa = f[active]
        converged = np.abs(fa - f_new) <= tol * np.maximum(np.abs(fa), 1e-12)
        f[active] = f_new
        idx = np.flatnonzero(active)
        active[idx[converged]] = False
    return H
