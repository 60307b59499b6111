"""Embedding-file I/O for the retrieval mode.

Two on-disk formats are supported:

* CSV with header ``id,e0,e1,...`` and one row per vector.
* Binary: magic ``TEMB``, u32 little-endian count, u32 little-endian dim,
  then count*dim float32 little-endian values in row order.

Loading preserves row order and keeps vectors in float32, so memory is
count * dim * 4 bytes plus constant overhead.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .gp import FiniteDomain

__all__ = ["EmbeddingFormatError", "load_embeddings", "write_embeddings_binary"]

MAGIC = b"TEMB"
HEADER_SIZE = 12  # magic + count + dim


class EmbeddingFormatError(ValueError):
    """Malformed embedding file; the message pinpoints the byte or line."""


def _load_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise EmbeddingFormatError(
            f"{path}: truncated header at byte {len(raw)} (need {HEADER_SIZE})"
        )
    if raw[:4] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {raw[:4]!r} at byte 0")
    count, dim = struct.unpack("<II", raw[4:HEADER_SIZE])
    if count == 0 or dim == 0:
        raise EmbeddingFormatError(f"{path}: zero count or dim in header at byte 4")
    expected = HEADER_SIZE + count * dim * 4
    if len(raw) != expected:
        raise EmbeddingFormatError(
            f"{path}: payload truncated at byte {len(raw)} (expected {expected})"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE)
    bad = np.flatnonzero(~np.isfinite(data))
    if bad.size:
        raise EmbeddingFormatError(
            f"{path}: non-finite value at byte {HEADER_SIZE + int(bad[0]) * 4}"
        )
    return data.reshape(count, dim).copy()


def _load_csv(path: Path) -> tuple[np.ndarray, list[str]]:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    width = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\r\n")
        cols = header.split(",")
        if len(cols) < 2 or cols[0] != "id" or cols[1] != "e0":
            raise EmbeddingFormatError(
                f"{path}: line 1: expected header 'id,e0,e1,...', got {header!r}"
            )
        width = len(cols) - 1
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) - 1 != width:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno}: expected {width} values, got {len(parts) - 1}"
                )
            try:
                vec = np.array(parts[1:], dtype=np.float32)
            except ValueError:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno}: non-numeric embedding value"
                ) from None
            if not np.all(np.isfinite(vec)):
                raise EmbeddingFormatError(f"{path}: line {lineno}: non-finite value")
            ids.append(parts[0])
            rows.append(vec)
    if not rows:
        raise EmbeddingFormatError(f"{path}: no embedding rows")
    return np.vstack(rows), ids


def load_embeddings(path) -> tuple[FiniteDomain, list[str]]:
    """Load an embedding file into an embedding-mode domain.

    Returns the domain (row order preserved, float32 vectors) and the row
    ids; binary files have no ids, so row indices are used.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        vectors = _load_binary(path)
        ids = [str(i) for i in range(vectors.shape[0])]
    elif head[:3] == b"id,":
        vectors, ids = _load_csv(path)
    else:
        raise EmbeddingFormatError(
            f"{path}: bad magic {head!r} at byte 0 "
            f"(expected {MAGIC!r} or a CSV 'id,e0,...' header)"
        )
    return FiniteDomain(points=vectors), ids


def write_embeddings_binary(path, vectors: np.ndarray) -> None:
    """Write vectors in the binary format; round-trips bit-exactly."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("expected a (count, dim) array")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))
