"""Top-k sparsification and the sparse gradient wire format.

Wire layout (little-endian)::

    u32 full_dim | u32 count | u32 origin_round | u32 indices[count] | f32 values[count]

``wire_size_bytes`` counts only the index/value payload, ``count * (4 + 4)``
with default widths; the 12-byte header is not included.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError

_HEADER = struct.Struct("<III")


def kept_count(delta: float, dim: int) -> int:
    """Number of coordinates top-k keeps: ``ceil(delta * dim)``.

    The product is rounded to 9 decimals first so that a rate which is itself a
    realized ratio ``m / dim`` maps back to exactly ``m``.
    """
    _check_rate(delta)
    return min(dim, max(1, math.ceil(round(delta * dim, 9))))


def realized_rate(delta: float, dim: int) -> float:
    """The rate top-k actually achieves on a ``dim``-vector, ``kept_count / dim``."""
    return kept_count(delta, dim) / dim


def _check_rate(delta: float) -> None:
    if not (0.0 < delta <= 1.0) or math.isnan(delta):
        raise ValueError(f"compression rate must lie in (0, 1], got {delta}")


@dataclass(frozen=True)
class SparseGradient:
    indices: np.ndarray
    values: np.ndarray
    full_dim: int
    origin_round: int = 0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def validate(self) -> None:
        idx = self.indices
        if idx.ndim != 1 or self.values.shape != idx.shape:
            raise CorruptionError("indices and values must be aligned 1-D arrays")
        if len(idx) > self.full_dim:
            raise CorruptionError(f"{len(idx)} entries exceed full_dim {self.full_dim}")
        if len(idx) and (idx[0] < 0 or idx[-1] >= self.full_dim):
            raise CorruptionError(f"index out of range for full_dim {self.full_dim}")
        if len(idx) > 1 and np.any(np.diff(idx) <= 0):
            raise CorruptionError("indices must be strictly increasing")


def topk_compress(g: np.ndarray, delta: float, origin_round: int = 0) -> SparseGradient:
    """Keep the ``ceil(delta * d)`` largest-magnitude entries of ``g``.

    Ties in magnitude go to the lower index, so the kept set is a prefix of one
    fixed total order and grows monotonically with ``delta``. Values are copied
    exactly.
    """
    g = np.asarray(g, dtype=np.float64)
    d = g.shape[0]
    if g.ndim != 1 or d < 1:
        raise ValueError("gradient must be a non-empty 1-D vector")
    m = kept_count(delta, d)
    if m == d:
        idx = np.arange(d)
    else:
        mag = np.abs(g)
        threshold = np.partition(mag, d - m)[d - m]
        above = np.flatnonzero(mag > threshold)
        ties = np.flatnonzero(mag == threshold)[: m - len(above)]
        idx = np.sort(np.concatenate([above, ties]))
    return SparseGradient(idx, g[idx], d, origin_round)


def densify(s: SparseGradient) -> np.ndarray:
    s.validate()
    out = np.zeros(s.full_dim, dtype=np.float64)
    out[s.indices] = s.values
    return out


def wire_size_bytes(s: SparseGradient, index_bytes: int = 4, value_bytes: int = 4) -> int:
    if index_bytes <= 0 or value_bytes <= 0:
        raise ValueError("byte widths must be positive")
    return len(s) * (index_bytes + value_bytes)


def encode(s: SparseGradient) -> bytes:
    """Serialize to the wire layout. Values are narrowed to float32."""
    s.validate()
    return (
        _HEADER.pack(s.full_dim, len(s), s.origin_round)
        + s.indices.astype("<u4").tobytes()
        + s.values.astype("<f4").tobytes()
    )


def decode(buf: bytes) -> SparseGradient:
    if len(buf) < _HEADER.size:
        raise CorruptionError("buffer shorter than header")
    full_dim, count, origin_round = _HEADER.unpack_from(buf)
    expected = _HEADER.size + 8 * count
    if len(buf) != expected:
        raise CorruptionError(f"expected {expected} bytes for {count} entries, got {len(buf)}")
    off = _HEADER.size
    idx = np.frombuffer(buf, dtype="<u4", count=count, offset=off).astype(np.int64)
    vals = np.frombuffer(buf, dtype="<f4", count=count, offset=off + 4 * count).astype(np.float64)
    s = SparseGradient(idx, vals, full_dim, origin_round)
    s.validate()
    return s
