"""Bit-exact on-disk container for dense float32 matrices.

Layout: magic ``PNMF1`` | rows u64 LE | cols u64 LE | payload f32 LE
row-major | FNV-1a-64 checksum of the payload bytes, u64 LE.  A JSON
manifest sidecar ``<name>.manifest.json`` sits next to each tensor so
artifact metadata stays human-diffable.

Matrices are plain 2-D float32 numpy arrays throughout the package;
this module is the only place that touches their byte representation.
"""

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from pnmf._kernels import fnv1a64
from pnmf.errors import CorruptFile, FormatError, WriteRejected

MAGIC = b"PNMF1"

ROLES = frozenset(
    {
        "V_train",
        "V_val",
        "V_test",
        "W",
        "H",
        "X_train",
        "X_val",
        "X_test",
        "labels",
        "schedule",
        "weights",
        # derived artifacts produced by the later stages
        "pairs_x0",
        "pairs_xt",
        "pairs_t",
        "probs",
        "X_adv",
    }
)


@dataclass(frozen=True)
class TensorManifest:
    """Sidecar metadata: identity, role, shape, payload checksum, provenance."""

    name: str
    role: str
    shape: tuple
    checksum: int
    created_by: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise FormatError(f"unknown tensor role {self.role!r}")


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def as_matrix(a, dtype=np.float32) -> np.ndarray:
    """Coerce to a 2-D C-contiguous array of the container dtype."""
    m = np.ascontiguousarray(a, dtype=dtype)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise FormatError(f"expected a 1-D or 2-D array, got ndim={m.ndim}")
    return m


def payload_checksum(m: np.ndarray) -> int:
    return fnv1a64(as_matrix(m).tobytes())


def write_tensor(m, name: str, role: str, created_by: str, path) -> TensorManifest:
    """Persist a matrix and its manifest sidecar; returns the manifest.

    Rejects non-finite entries before any byte is written.
    """
    m = as_matrix(m)
    if not np.isfinite(m).all():
        raise WriteRejected(f"tensor {name!r} contains non-finite entries")
    payload = m.tobytes()
    checksum = fnv1a64(payload)
    rows, cols = m.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(payload)
        fh.write(struct.pack("<Q", checksum))
    manifest = TensorManifest(
        name=name, role=role, shape=(rows, cols), checksum=checksum, created_by=created_by
    )
    with open(manifest_path(path), "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_tensor(path):
    """Read a matrix and its manifest back; verifies checksum and sidecar.

    Returns ``(matrix, manifest)`` with the matrix bit-identical to the
    one written.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 16 + 8 or raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a PNMF1 tensor container")
    rows, cols = struct.unpack_from("<QQ", raw, len(MAGIC))
    start = len(MAGIC) + 16
    nbytes = rows * cols * 4
    if len(raw) != start + nbytes + 8:
        raise CorruptFile(f"{path}: payload truncated or padded")
    payload = raw[start : start + nbytes]
    (stored,) = struct.unpack_from("<Q", raw, start + nbytes)
    if fnv1a64(payload) != stored:
        raise CorruptFile(f"{path}: payload checksum mismatch")
    mpath = manifest_path(path)
    if not mpath.exists():
        raise FormatError(
            f"{path}: manifest sidecar {mpath.name} missing; "
            "restore it or re-run the stage that produced this tensor"
        )
    with open(mpath) as fh:
        meta = json.load(fh)
    manifest = TensorManifest(
        name=meta["name"],
        role=meta["role"],
        shape=tuple(meta["shape"]),
        checksum=meta["checksum"],
        created_by=meta["created_by"],
    )
    if manifest.checksum != stored:
        raise CorruptFile(f"{path}: manifest checksum disagrees with payload")
    if manifest.shape != (rows, cols):
        raise CorruptFile(f"{path}: manifest shape disagrees with header")
    m = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    return m, manifest
