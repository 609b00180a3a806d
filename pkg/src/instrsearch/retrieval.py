"""Exact cosine ranking over stored snippet embeddings, and the retrieval metrics."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ChecksumMismatch, CorruptFile, InstrSearchError, TooFewPairs, VersionMismatch

NOT_FOUND = None
DEFAULT_CUTOFF = 10

INDEX_MAGIC = b"INSIDX\r\n"
INDEX_VERSION = 1


class ZeroVector(InstrSearchError):
    pass


class EmptyQuerySet(InstrSearchError):
    pass


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ZeroVector("cannot normalize a zero embedding")
    return vectors / norms


@dataclass(frozen=True)
class RankedResult:
    snippet_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class SearchIndex:
    """Immutable store of unit-normalized snippet embeddings."""

    ids: tuple[str, ...]
    vectors: np.ndarray
    id_order: np.ndarray = field(repr=False, compare=False, default=None)

    @classmethod
    def build(cls, ids: Sequence[str], vectors) -> "SearchIndex":
        ids = tuple(str(i) for i in ids)
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(ids):
            raise ValueError("need one vector per id")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate snippet ids in index")
        if not np.isfinite(vectors).all():
            raise ValueError("non-finite embedding in index")
        unit = _unit_rows(vectors.astype(np.float64)).astype(np.float32)
        unit.setflags(write=False)
        return cls(ids, unit, _id_ranks(ids))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _id_ranks(ids: Sequence[str]) -> np.ndarray:
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[np.argsort(np.array(ids, dtype=object), kind="stable")] = np.arange(len(ids))
    return ranks


def search(index: SearchIndex, query_embedding, k: int) -> list[RankedResult]:
    """Top ``min(k, len(index))`` snippets by cosine similarity; ties go to the smaller id."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if len(index) == 0:
        raise ValueError("search over an empty index")
    q = np.asarray(query_embedding, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ZeroVector("query embedding is all zeros")
    scores = np.clip(index.vectors.astype(np.float64) @ (q / norm), -1.0, 1.0)
    order = np.lexsort((index.id_order, -scores))[:k]
    return [RankedResult(index.ids[j], float(scores[j]), r) for r, j in enumerate(order, start=1)]


def success_rate_at_k(franks: Sequence[Optional[int]], k: int) -> float:
    """Fraction of queries whose correct result is ranked within the top ``k``."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if not franks:
        raise EmptyQuerySet("no queries")
    hits = sum(1 for r in franks if r is not NOT_FOUND and r <= k)
    return hits / len(franks)


def mrr(franks: Sequence[Optional[int]], cutoff: int = DEFAULT_CUTOFF) -> float:
    """Mean reciprocal rank; a rank beyond ``cutoff`` (or not found) contributes 0."""
    if cutoff < 1:
        raise ValueError(f"cutoff must be at least 1, got {cutoff}")
    if not franks:
        raise EmptyQuerySet("no queries")
    total = sum(1.0 / r for r in franks if r is not NOT_FOUND and r <= cutoff)
    return total / len(franks)


def ndcg(relevances: Sequence[float], k: int = DEFAULT_CUTOFF) -> float:
    """NDCG@k of one ranked list given precomputed graded relevance labels."""
    def dcg(rels):
        return sum(r / math.log2(i + 2) for i, r in enumerate(rels))

    ideal = dcg(sorted(relevances, reverse=True)[:k])
    return dcg(list(relevances)[:k]) / ideal if ideal > 0 else 0.0


@dataclass
class EvalOutcome:
    franks: list[Optional[int]]
    sr1: float
    sr5: float
    sr10: float
    mrr: float

    @classmethod
    def from_franks(cls, franks: Sequence[Optional[int]], cutoff: int = DEFAULT_CUTOFF) -> "EvalOutcome":
        franks = [r if r is not NOT_FOUND and r <= cutoff else NOT_FOUND for r in franks]
        return cls(
            franks,
            success_rate_at_k(franks, 1),
            success_rate_at_k(franks, 5),
            success_rate_at_k(franks, 10),
            mrr(franks, cutoff),
        )

    def report(self) -> str:
        return (
            "SR@1\tSR@5\tSR@10\tMRR\n"
            f"{self.sr1:.6f}\t{self.sr5:.6f}\t{self.sr10:.6f}\t{self.mrr:.6f}\n"
        )


def distractor_franks(comment_vecs, translation_vecs) -> list[int]:
    """Full 1-based rank of each comment's own translation among all translations."""
    c = _unit_rows(np.asarray(comment_vecs, dtype=np.float64))
    t = _unit_rows(np.asarray(translation_vecs, dtype=np.float64))
    scores = c @ t.T
    own = np.diag(scores)[:, None]
    n = scores.shape[0]
    earlier = np.arange(n)[None, :] < np.arange(n)[:, None]
    ahead = (scores > own) | ((scores == own) & earlier)
    return [int(x) + 1 for x in ahead.sum(axis=1)]


def evaluate_distractor_protocol(ct_pairs, cutoff: int = DEFAULT_CUTOFF) -> EvalOutcome:
    """Each comment queries every translation in the set; its own one is the correct answer."""
    if len(ct_pairs) < 2:
        raise TooFewPairs("the distractor protocol needs at least two pairs")
    comments = np.stack([np.asarray(c) for c, _ in ct_pairs])
    translations = np.stack([np.asarray(t) for _, t in ct_pairs])
    return EvalOutcome.from_franks(distractor_franks(comments, translations), cutoff)


def save_index(index: SearchIndex, path, vocab_checksum: str, rules_checksum: str) -> None:
    parts = [
        INDEX_MAGIC,
        struct.pack("<HII", INDEX_VERSION, index.dim, len(index)),
        vocab_checksum.encode("ascii").ljust(64, b"\0"),
        rules_checksum.encode("ascii").ljust(64, b"\0"),
    ]
    for snippet_id in index.ids:
        raw = snippet_id.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    parts.append(index.vectors.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


@dataclass(frozen=True)
class IndexHeader:
    version: int
    dim: int
    count: int
    vocab_checksum: str
    rules_checksum: str


def load_index(path, vocab_checksum: Optional[str] = None, rules_checksum: Optional[str] = None):
    """Read an index file; returns ``(SearchIndex, IndexHeader)``."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(INDEX_MAGIC):
        raise CorruptFile(f"{path}: not an index file")
    pos = len(INDEX_MAGIC)
    try:
        version, dim, count = struct.unpack_from("<HII", data, pos)
        pos += 10
        if version != INDEX_VERSION:
            raise VersionMismatch(f"{path}: index version {version}, expected {INDEX_VERSION}")
        vsum = data[pos:pos + 64].rstrip(b"\0").decode("ascii")
        rsum = data[pos + 64:pos + 128].rstrip(b"\0").decode("ascii")
        pos += 128
        ids = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            ids.append(data[pos:pos + n].decode("utf-8"))
            pos += n
        nbytes = 4 * dim * count
        if len(data) - pos != nbytes:
            raise CorruptFile(f"{path}: expected {nbytes} bytes of vectors, found {len(data) - pos}")
        vectors = np.frombuffer(data, dtype="<f4", count=dim * count, offset=pos).reshape(count, dim)
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if vocab_checksum is not None and vsum != vocab_checksum:
        raise ChecksumMismatch(f"{path}: built with a different vocabulary")
    if rules_checksum is not None and rsum != rules_checksum:
        raise ChecksumMismatch(f"{path}: built with a different rule file")
    vectors = vectors.astype(np.float32)
    vectors.setflags(write=False)
    index = SearchIndex(tuple(ids), vectors, _id_ranks(ids))
    return index, IndexHeader(version, dim, count, vsum, rsum)
