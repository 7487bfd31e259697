"""Hot-kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise
the NumPy fallback is used.  Setting the environment variable
``PNMF_PURE_PYTHON=1`` forces the fallback (used by the benchmark and
the backend-parity tests).
"""

import os

from pnmf._kernels import _pycore

if os.environ.get("PNMF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pycore
    BACKEND = "python"
else:
    try:
        from pnmf._kernels import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pycore
        BACKEND = "python"

fnv1a64 = _impl.fnv1a64
kl_div = _impl.kl_div
kl_update = _impl.kl_update
nnls_pg = _impl.nnls_pg

__all__ = ["BACKEND", "fnv1a64", "kl_div", "kl_update", "nnls_pg"]
