"""Feature-factorization classification pipeline with diffusion purification.

Subpackages and modules are organized per pipeline stage: ingest builds
non-negative data matrices, nnmf factorizes them, featstats ranks the
components, classifier/denoiser train small networks on the selected
features, defense purifies at test time, attacks evaluates robustness,
metrics assembles the comparison table, and cli orchestrates the stages.
"""

from pnmf._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
