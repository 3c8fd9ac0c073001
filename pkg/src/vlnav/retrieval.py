"""Embedding-based goal retrieval.

Prompts and goal descriptors are mapped onto the unit sphere with a signed
feature-hashing embedder, the candidate pool is scored by scaled dot products,
scores are normalized with a softmax and the goal is picked by argmax
(lowest index on ties). Pools round-trip through a small binary file format so
externally computed embeddings can be dropped in.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .encoder import Prompt, TokenSeq, tokenize

POOL_MAGIC = b"VLFE"
POOL_VERSION = 1


class ZeroVectorError(ValueError):
    """Hash accumulation cancelled out to the zero vector."""


class DimensionMismatchError(ValueError):
    pass


class PoolFormatError(ValueError):
    """Pool file violates the on-disk contract (magic/version/layout/norm)."""


@dataclass(frozen=True)
class Embedding:
    """Unit-norm vector; values are float32 so pools round-trip bit-exactly.

    The constructor admits the file-format tolerance (1e-4); embeddings
    produced by the built-in hasher are unit-norm within 1e-6.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("embedding must be a nonempty 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding values must be finite")
        n = float(np.linalg.norm(v.astype(np.float64)))
        if abs(n - 1.0) > 1e-4:
            raise ValueError(f"embedding norm {n} not within 1e-4 of 1")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class GoalPoolEntry:
    id: str
    descriptor: str
    embedding: Embedding
    goal_link: str | None = None


@dataclass(frozen=True)
class RetrievalConfig:
    logit_scale: float = 100.0
    dim: int = 64

    def __post_init__(self) -> None:
        if self.logit_scale <= 0:
            raise ValueError("logit_scale must be positive")


@dataclass(frozen=True)
class RetrievalResult:
    scores: np.ndarray
    probs: np.ndarray
    best_index: int
    best_id: str


def embed_text(tokens: TokenSeq, d: int = 64) -> Embedding:
    """Signed feature hashing: bucket = id % d, sign from the hash's top bit."""
    if d < 8:
        raise ValueError("embedding dimension must be at least 8")
    if not tokens.tokens:
        raise ZeroVectorError("cannot embed an empty token sequence")
    acc = np.zeros(d, dtype=np.float64)
    for h in tokens.ids:
        sign = 1.0 if (h >> 63) == 0 else -1.0
        acc[h % d] += sign
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        raise ZeroVectorError(f"hash accumulation cancelled for tokens {tokens.tokens}")
    return Embedding(values=(acc / norm).astype(np.float32))


def embed_descriptor(descriptor: str, d: int = 64) -> Embedding:
    """Descriptor text through the same hasher (image-embedding stand-in)."""
    return embed_text(tokenize(descriptor), d)


def score_pool(t: Embedding, pool: list[GoalPoolEntry], cfg: RetrievalConfig) -> np.ndarray:
    """Scaled dot products s_j = logit_scale * <t, v_j>, in pool order."""
    if not pool:
        raise ValueError("pool must be nonempty")
    for entry in pool:
        if entry.embedding.dim != t.dim:
            raise DimensionMismatchError(
                f"pool entry {entry.id!r} has dim {entry.embedding.dim}, query has {t.dim}")
    mat = np.stack([e.embedding.values.astype(np.float64) for e in pool])
    return cfg.logit_scale * (mat @ t.values.astype(np.float64))


def softmax(scores: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; stable for arbitrarily large finite scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("scores must be nonempty")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    z = np.exp(s - np.max(s))
    return z / np.sum(z)


def retrieve(prompt: Prompt, pool: list[GoalPoolEntry],
             cfg: RetrievalConfig | None = None) -> RetrievalResult:
    """Embed the prompt text, score the pool, softmax, argmax (lowest-index ties)."""
    cfg = cfg or RetrievalConfig()
    t = embed_text(tokenize(prompt.text), cfg.dim)
    scores = score_pool(t, pool, cfg)
    probs = softmax(scores)
    best = int(np.argmax(scores))
    return RetrievalResult(scores=scores, probs=probs, best_index=best, best_id=pool[best].id)


def pool_from_descriptors(entries: list[tuple[str, str]], d: int = 64,
                          goal_links: list[str | None] | None = None) -> list[GoalPoolEntry]:
    """Build a pool by hashing descriptor strings; entries are (id, descriptor)."""
    links = goal_links or [None] * len(entries)
    return [
        GoalPoolEntry(id=eid, descriptor=desc, embedding=embed_descriptor(desc, d), goal_link=link)
        for (eid, desc), link in zip(entries, links)
    ]


# --- pool file format ----------------------------------------------------------
# Little-endian layout:
#   magic "VLFE" | version u32 | dim u32 | count u32
#   per entry: id_len u16, id bytes | desc_len u16, desc bytes | dim * f32

def write_pool(pool: list[GoalPoolEntry], path: str) -> None:
    if not pool:
        raise ValueError("refusing to write an empty pool")
    dim = pool[0].embedding.dim
    ids = [entry.id for entry in pool]
    if len(set(ids)) != len(ids):
        raise ValueError("pool entry ids must be unique")
    for entry in pool:
        if entry.embedding.dim != dim:
            raise DimensionMismatchError(f"entry {entry.id!r} dim differs from pool dim {dim}")
    buf = bytearray()
    buf += POOL_MAGIC
    buf += struct.pack("<III", POOL_VERSION, dim, len(pool))
    for entry in pool:
        for text in (entry.id, entry.descriptor):
            raw = text.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"string too long in entry {entry.id!r}")
            buf += struct.pack("<H", len(raw))
            buf += raw
        buf += entry.embedding.values.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(buf))


def read_pool(path: str) -> list[GoalPoolEntry]:
    with open(path, "rb") as f:
        data = f.read()
    view = memoryview(data)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise PoolFormatError(f"truncated pool file: needed {n} bytes at offset {off}")
        chunk = view[off:off + n]
        off += n
        return chunk

    if bytes(take(4)) != POOL_MAGIC:
        raise PoolFormatError("bad magic: not a pool file")
    version, dim, count = struct.unpack("<III", take(12))
    if version != POOL_VERSION:
        raise PoolFormatError(f"unsupported pool version {version}")

    pool: list[GoalPoolEntry] = []
    seen: set[str] = set()
    for _ in range(count):
        (id_len,) = struct.unpack("<H", take(2))
        entry_id = bytes(take(id_len)).decode("utf-8")
        (desc_len,) = struct.unpack("<H", take(2))
        descriptor = bytes(take(desc_len)).decode("utf-8")
        values = np.frombuffer(take(4 * dim), dtype="<f4").copy()
        norm = float(np.linalg.norm(values.astype(np.float64)))
        if abs(norm - 1.0) > 1e-4:
            raise PoolFormatError(f"entry {entry_id!r} norm {norm:.6f} violates unit-norm contract")
        if entry_id in seen:
            raise PoolFormatError(f"duplicate entry id {entry_id!r}")
        seen.add(entry_id)
        pool.append(GoalPoolEntry(id=entry_id, descriptor=descriptor,
                                  embedding=Embedding(values=values)))
    if off != len(view):
        raise PoolFormatError(f"{len(view) - off} trailing bytes after {count} entries")
    return pool
