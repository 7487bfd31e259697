"""Deterministic keyed random streams.

Every stochastic operation in the pipeline draws from a counter-based
generator keyed by a tuple such as ``(global_seed, "diffusion", sample,
repetition)``.  Streams are therefore independent of execution order and
thread schedule: the same key always yields the same draws.
"""

import numpy as np

from pnmf._kernels import fnv1a64


def derive_key(*parts) -> int:
    """Collapse a mixed tuple of ints/strings into a 64-bit stream key."""
    buf = bytearray()
    for part in parts:
        if isinstance(part, str):
            buf += b"s" + part.encode("utf-8") + b"\x00"
        elif isinstance(part, (int, np.integer)):
            # wide enough for derived uint64 keys fed back in
            buf += b"i" + int(part).to_bytes(16, "little", signed=True)
        else:
            raise TypeError(f"unsupported key part type: {type(part)!r}")
    return fnv1a64(bytes(buf))


def keyed_rng(*parts) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``parts``."""
    return np.random.Generator(np.random.Philox(key=derive_key(*parts)))


def gaussians(rng: np.random.Generator, n: int) -> np.ndarray:
    """n standard-normal draws via the Box-Muller transform.

    Uses a fixed, even number of uniform draws so the stream position
    after the call depends only on ``n``.
    """
    m = (n + 1) // 2
    u1 = rng.random(m)
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * m, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]
