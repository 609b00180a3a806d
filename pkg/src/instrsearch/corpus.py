"""Corpus ingestion: JSONL records to translated, tokenized training pairs."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .disasm import DisassemblyError, MethodDisassembly, parse_disassembly
from .errors import InstrSearchError
from .ruleset import RuleSet, UnknownOpcode
from .text import Vocabulary, map_tokens, tokenize
from .toolchain import CompileFailed, ToolConfig, disassemble_external
from .trainer import TrainingPair
from .translator import TranslationError, translate_method

log = logging.getLogger(__name__)

FULL_TRAIN_SIZE = 69_324
FULL_TEST_SIZE = 1_000

_CODE_FIELDS = ("code", "func_code_string", "original_string")
_COMMENT_FIELDS = ("docstring", "func_documentation_string", "comment")
_MODIFIERS = frozenset(
    "public private protected static final synchronized abstract native strictfp default".split()
)


class FileUnreadable(InstrSearchError):
    pass


class NoValidRecords(InstrSearchError):
    pass


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    code: str
    comment: str
    disassembly: Optional[str] = None


class RecordList(list):
    """A list of records that also remembers how many input lines were skipped."""

    def __init__(self, records=(), skipped: int = 0):
        super().__init__(records)
        self.skipped = skipped


def _first(obj: dict, names: Sequence[str]) -> Optional[str]:
    for name in names:
        value = obj.get(name)
        if isinstance(value, str) and value.strip():
            return value
    return None


def read_corpus(path, format: str = "jsonl") -> RecordList:
    """Read one JSON object per line; lines without code or a docstring are skipped and counted."""
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read corpus {path}: {exc}") from None

    records = RecordList()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            obj = None
        code = _first(obj, _CODE_FIELDS) if isinstance(obj, dict) else None
        comment = _first(obj, _COMMENT_FIELDS) if isinstance(obj, dict) else None
        if code is None or comment is None:
            records.skipped += 1
            log.warning("%s:%d: skipped record without code and docstring", path, line_no)
            continue
        rid = obj.get("id")
        disasm = obj.get("disassembly")
        records.append(CorpusRecord(
            str(rid) if rid is not None else f"line{line_no}",
            code,
            comment,
            disasm if isinstance(disasm, str) and disasm.strip() else None,
        ))
    if not records:
        raise NoValidRecords(f"{path}: no usable records ({records.skipped} skipped)")
    return records


def write_corpus(records: Iterable[Union[CorpusRecord, dict]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            if isinstance(r, CorpusRecord):
                r = {"id": r.id, "code": r.code, "docstring": r.comment, "disassembly": r.disassembly}
                r = {k: v for k, v in r.items() if v is not None}
            f.write(json.dumps(r, sort_keys=True) + "\n")


def split_corpus(records: Sequence[CorpusRecord], test_size: int = FULL_TEST_SIZE, seed: int = 0):
    """Deterministic ``(train, test, metadata)`` split.

    The metadata records the split sizes (69,324 / 1,000 for the full corpus).
    """
    if not 0 < test_size < len(records):
        raise ValueError(f"test size {test_size} does not fit a corpus of {len(records)}")
    perm = np.random.default_rng([seed, 17]).permutation(len(records))
    test_idx = set(perm[:test_size].tolist())
    train = [r for i, r in enumerate(records) if i not in test_idx]
    test = [r for i, r in enumerate(records) if i in test_idx]
    meta = {
        "train_size": len(train),
        "test_size": len(test),
        "full_corpus": len(train) == FULL_TRAIN_SIZE and len(test) == FULL_TEST_SIZE,
        "seed": seed,
    }
    return train, test, meta


def is_constructor(method_id: str) -> bool:
    """True for ``Foo()``-style headers (no return type) and static initializers."""
    if method_id.startswith("static {}"):
        return True
    head = method_id.split("(", 1)[0].split()
    head = [w for w in head if w not in _MODIFIERS and not w.startswith("<")]
    return len(head) == 1


def select_methods(methods: Sequence[MethodDisassembly]) -> list[MethodDisassembly]:
    """Drop compiler-added constructors and initializers unless nothing else is left."""
    chosen = [m for m in methods if not is_constructor(m.method_id)]
    return chosen or list(methods)


def translate_text(disassembly: str, rules: RuleSet) -> str:
    """Sentence stream for every selected method of one disassembly."""
    methods = select_methods(parse_disassembly(disassembly))
    return " ".join(translate_method(md, rules).text() for md in methods)


@dataclass
class TranslatedRecord:
    record: CorpusRecord
    translation: str


@dataclass
class TranslateReport:
    items: list[TranslatedRecord]
    skipped: dict[str, int]


def _translate_one(record: CorpusRecord, rules: RuleSet, tools: Optional[ToolConfig], work_dir):
    disasm = record.disassembly
    if disasm is None:
        if tools is None or work_dir is None:
            return "no_disassembly", None
        try:
            disasm = disassemble_external(record.code, work_dir, tools)
        except CompileFailed:
            return "compile_failed", None
    try:
        text = translate_text(disasm, rules)
    except (DisassemblyError, TranslationError, UnknownOpcode) as exc:
        log.warning("record %s: %s", record.id, exc)
        return "translate_failed", None
    if not text:
        return "empty_translation", None
    return None, text


def translate_records(
    records: Sequence[CorpusRecord],
    rules: RuleSet,
    tools: Optional[ToolConfig] = None,
    work_dir=None,
    workers: int = 1,
) -> TranslateReport:
    """Translate records on a bounded pool; output keeps input order, failures are counted."""
    def job(r):
        return _translate_one(r, rules, tools, work_dir)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, records))
    else:
        results = [job(r) for r in records]

    report = TranslateReport([], {})
    for record, (reason, text) in zip(records, results):
        if reason is not None:
            report.skipped[reason] = report.skipped.get(reason, 0) + 1
            continue
        report.items.append(TranslatedRecord(record, text))
    for reason, count in sorted(report.skipped.items()):
        log.warning("skipped %d record(s): %s", count, reason)
    return report


def make_pairs(
    items: Sequence[TranslatedRecord],
    comment_vocab: Vocabulary,
    translation_vocab: Optional[Vocabulary] = None,
) -> list[TrainingPair]:
    """Map translations and comments to id sequences (one vocabulary unless two are given)."""
    translation_vocab = translation_vocab or comment_vocab
    pairs = []
    for item in items:
        t = map_tokens(translation_vocab, tokenize(item.translation))
        c = map_tokens(comment_vocab, tokenize(item.record.comment))
        if t and c:
            pairs.append(TrainingPair(item.record.id, tuple(t), tuple(c)))
    return pairs
