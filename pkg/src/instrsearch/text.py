"""Tokenization and the single word-to-id mapping shared by translations and comments."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InstrSearchError

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1
BOUNDARY = "."

# a period followed by whitespace or end of text closes a sentence; any other
# period (List.size, 3.14) is just a separator
_BOUNDARY = re.compile(r"\.(?=\s|$)")
_SUBWORD = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")

TokenSeq = list[str]
Corpus = Iterable[Union[str, Sequence[str]]]


class EmptyCorpus(InstrSearchError):
    pass


def tokenize(text: str) -> TokenSeq:
    """Lowercased word tokens with camelCase/snake_case identifiers split apart."""
    tokens: list[str] = []
    for i, chunk in enumerate(_BOUNDARY.split(text)):
        if i:
            tokens.append(BOUNDARY)
        for piece in re.split(r"[^A-Za-z0-9]+", chunk):
            tokens.extend(w.lower() for w in _SUBWORD.findall(piece))
    return tokens


def _as_tokens(doc: Union[str, Sequence[str]]) -> Sequence[str]:
    return tokenize(doc) if isinstance(doc, str) else doc


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.words[:2] != (PAD, UNK):
            raise ValueError("vocabulary must start with the PAD and UNK entries")
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: object) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def serialize(self) -> str:
        return "".join(w + "\n" for w in self.words)

    def checksum(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.serialize())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8", newline="\n") as f:
            return cls(tuple(f.read().splitlines()))


def build_vocabulary(corpus: Corpus, n: int) -> Vocabulary:
    """Top ``n - 2`` words of one corpus after PAD and UNK; ties broken alphabetically."""
    if n < 3:
        raise ValueError(f"vocabulary size must be at least 3, got {n}")
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(_as_tokens(doc))
    counts.pop(PAD, None)
    counts.pop(UNK, None)
    if not counts:
        raise EmptyCorpus("no tokens to build a vocabulary from")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary((PAD, UNK, *(w for w, _ in ranked[: n - 2])))


def build_shared_vocabulary(translations: Corpus, comments: Corpus, n: int) -> Vocabulary:
    """One vocabulary counted over translations and comments together."""
    def union():
        yield from translations
        yield from comments

    return build_vocabulary(union(), n)


def map_tokens(v: Vocabulary, tokens: Sequence[str]) -> list[int]:
    return [v.id(t) for t in tokens]


def init_embeddings(v: Vocabulary, m: int, seed: int, dtype=np.float32) -> np.ndarray:
    """Uniform(-0.1, 0.1) embedding matrix with an all-zero PAD row."""
    if m < 1:
        raise ValueError(f"embedding dimension must be positive, got {m}")
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-0.1, 0.1, size=(len(v), m)).astype(dtype)
    emb[PAD_ID] = 0.0
    return emb


def pad_batch(seqs: Sequence[Sequence[int]], max_len: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences to the longest one; tails beyond ``max_len`` are cut."""
    seqs = [list(s)[:max_len] for s in seqs]
    width = max((len(s) for s in seqs), default=0)
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    for row, s in enumerate(seqs):
        ids[row, : len(s)] = s
    return ids, np.arange(width)[None, :] < lengths[:, None]
