"""End-to-end stages: translate a corpus, build vocabularies, train, index, evaluate, search."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .corpus import CorpusRecord, TranslatedRecord, make_pairs, translate_records
from .retrieval import EvalOutcome, RankedResult, SearchIndex, distractor_franks, search
from .ruleset import RuleSet
from .text import Vocabulary, build_shared_vocabulary, build_vocabulary, map_tokens, tokenize
from .toolchain import ToolConfig
from .trainer import COMMENT, SHARED, TRANSLATION, TrainConfig, TrainingPair, train

Vocabs = dict[str, Vocabulary]


def comment_vocab(vocabs: Vocabs) -> Vocabulary:
    return vocabs.get(SHARED) or vocabs[COMMENT]


def translation_vocab(vocabs: Vocabs) -> Vocabulary:
    return vocabs.get(SHARED) or vocabs[TRANSLATION]


def vocab_checksums(vocabs: Vocabs) -> dict[str, str]:
    return {role: v.checksum() for role, v in sorted(vocabs.items())}


def translate_corpus(
    records: Sequence[CorpusRecord],
    rules: RuleSet,
    tools: Optional[ToolConfig] = None,
    work_dir=None,
    workers: int = 1,
) -> list[TranslatedRecord]:
    return translate_records(records, rules, tools, work_dir, workers).items


def build_vocabs(items: Sequence[TranslatedRecord], size: int, shared: bool = True) -> Vocabs:
    translations = [tokenize(it.translation) for it in items]
    comments = [tokenize(it.record.comment) for it in items]
    if shared:
        return {SHARED: build_shared_vocabulary(translations, comments, size)}
    return {COMMENT: build_vocabulary(comments, size), TRANSLATION: build_vocabulary(translations, size)}


def pairs_for(items: Sequence[TranslatedRecord], vocabs: Vocabs) -> list[TrainingPair]:
    return make_pairs(items, comment_vocab(vocabs), translation_vocab(vocabs))


def train_model(
    items: Sequence[TranslatedRecord],
    vocabs: Vocabs,
    config: TrainConfig,
    rules_checksum: str,
    log: Optional[Callable[[str], None]] = None,
) -> Checkpoint:
    config = replace(config, shared_vocab=SHARED in vocabs)
    pairs = pairs_for(items, vocabs)
    sizes = len(comment_vocab(vocabs)) if config.shared_vocab else (
        len(comment_vocab(vocabs)), len(translation_vocab(vocabs)))
    result = train(pairs, config, sizes, log=log)
    return Checkpoint(config, vocab_checksums(vocabs), rules_checksum, result.state, config.seed,
                      metadata={"pairs": len(pairs), "best_epoch": result.best_epoch})


def embed_items(cp: Checkpoint, items: Sequence[TranslatedRecord], vocabs: Vocabs):
    """``(comment embeddings, translation embeddings)`` for aligned records."""
    pairs = pairs_for(items, vocabs)
    if len(pairs) != len(items):
        raise ValueError("some records produced empty token sequences")
    max_len = cp.config.max_len
    c = cp.model.encode_comments([p.comment_ids for p in pairs], max_len)
    t = cp.model.encode_translations([p.translation_ids for p in pairs], max_len)
    return c, t


def evaluate_checkpoint(cp: Checkpoint, items: Sequence[TranslatedRecord], vocabs: Vocabs,
                        cutoff: int = 10) -> EvalOutcome:
    """Distractor evaluation: every comment searches all translations of ``items``."""
    c, t = embed_items(cp, items, vocabs)
    return EvalOutcome.from_franks(distractor_franks(c, t), cutoff)


def build_index(cp: Checkpoint, items: Sequence[TranslatedRecord], vocabs: Vocabs) -> SearchIndex:
    pairs = pairs_for(items, vocabs)
    t = cp.model.encode_translations([p.translation_ids for p in pairs], cp.config.max_len)
    return SearchIndex.build([p.snippet_id for p in pairs], t)


def encode_query(cp: Checkpoint, vocabs: Vocabs, query: str) -> np.ndarray:
    """Queries go through the comment encoder."""
    ids = map_tokens(comment_vocab(vocabs), tokenize(query))
    if not ids:
        raise ValueError("query has no words")
    return cp.model.encode_comments([ids], cp.config.max_len)[0]


def run_search(cp: Checkpoint, vocabs: Vocabs, index: SearchIndex, query: str, k: int) -> list[RankedResult]:
    return search(index, encode_query(cp, vocabs, query), k)
