"""VLFE pool file writer.

Little-endian layout shared with the navigation core:
  magic "VLFE" | version u32 = 1 | dim u32 | count u32
  per entry: id (u16 length + UTF-8) | descriptor (u16 length + UTF-8)
             | dim float32 values
Written atomically (temp file + rename).
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"VLFE"
VERSION = 1


def write_pool_file(path: str, ids: list[str], descriptors: list[str],
                    embeddings: np.ndarray) -> None:
    if embeddings.ndim != 2 or embeddings.shape[0] != len(ids) or len(ids) != len(descriptors):
        raise ValueError("ids, descriptors and embedding rows must line up")
    count, dim = embeddings.shape
    norms = np.linalg.norm(embeddings.astype(np.float64), axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ValueError("embeddings must be unit-norm within 1e-4")

    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<III", VERSION, dim, count)
    for entry_id, descriptor, row in zip(ids, descriptors, embeddings):
        for text in (entry_id, descriptor):
            raw = text.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"string too long in entry {entry_id!r}")
            buf += struct.pack("<H", len(raw))
            buf += raw
        buf += np.ascontiguousarray(row, dtype="<f4").tobytes()

    out_dir = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".pool-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(buf))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
