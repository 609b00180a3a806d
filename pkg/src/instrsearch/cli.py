"""Command-line entry point.

Exit status: 0 on success, 1 on a usage error, 2 when a stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import read_corpus, split_corpus, write_corpus
from .disasm import parse_disassembly
from .errors import InstrSearchError
from .retrieval import load_index, save_index
from .ruleset import default_rules, load_rules
from .synthetic import toy_corpus
from .text import Vocabulary
from .toolchain import ToolConfig, disassemble_external
from .trainer import COMMENT, SHARED, TRANSLATION, TrainConfig
from .translator import export_graph, translate_method

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    def __init__(self, message: str, usage: Optional[str] = None):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", self.format_usage())


def _rules(args):
    if args.rules:
        return load_rules(Path(args.rules).read_text(encoding="utf-8"))
    return default_rules()


def _vocabs(args) -> dict[str, Vocabulary]:
    if args.vocab:
        return {SHARED: Vocabulary.load(args.vocab)}
    if args.comment_vocab and args.translation_vocab:
        return {COMMENT: Vocabulary.load(args.comment_vocab), TRANSLATION: Vocabulary.load(args.translation_vocab)}
    raise UsageError("give --vocab, or both --comment-vocab and --translation-vocab")


def _translated(args, path):
    records = read_corpus(path)
    tools = ToolConfig.from_env() if args.work_dir else None
    return pipeline.translate_corpus(records, _rules(args), tools, args.work_dir, args.workers)


def _checkpoint(args, vocabs):
    return load_checkpoint(args.checkpoint, pipeline.vocab_checksums(vocabs), _rules(args).checksum)


def cmd_translate(args) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    if args.source:
        text = disassemble_external(text, args.work_dir or ".instrsearch-work", ToolConfig.from_env())
    rules = _rules(args)
    out = []
    for md in parse_disassembly(text):
        t = translate_method(md, rules)
        out.append(f"# {md.method_id}")
        out.extend(t.lines())
        if args.graph:
            out.append(export_graph(t, args.graph).rstrip("\n"))
    sys.stdout.write("\n".join(out) + "\n")
    return EXIT_OK


def cmd_build_vocab(args) -> int:
    items = _translated(args, args.corpus)
    vocabs = pipeline.build_vocabs(items, args.size, shared=not args.separate)
    if args.separate:
        vocabs[COMMENT].save(f"{args.out}.comment")
        vocabs[TRANSLATION].save(f"{args.out}.translation")
    else:
        vocabs[SHARED].save(args.out)
    for role, v in sorted(vocabs.items()):
        print(f"{role}\t{len(v)}\t{v.checksum()}")
    return EXIT_OK


def cmd_train(args) -> int:
    vocabs = _vocabs(args)
    items = _translated(args, args.corpus)
    config = TrainConfig(
        batch_size=args.batch_size, vocab_size=max(len(v) for v in vocabs.values()),
        embed_dim=args.embed_dim, hidden_dim=args.hidden_dim, margin=args.margin,
        learning_rate=args.lr, dropout=args.dropout, epochs=args.epochs, seed=args.seed,
        val_fraction=args.val_fraction, max_len=args.max_len,
    )
    log_file = open(args.log, "w", encoding="utf-8") if args.log else None

    def log(line):
        print(line, file=log_file or sys.stderr, flush=True)

    try:
        cp = pipeline.train_model(items, vocabs, config, _rules(args).checksum, log)
    finally:
        if log_file:
            log_file.close()
    save_checkpoint(cp, args.out)
    return EXIT_OK


def cmd_index(args) -> int:
    vocabs = _vocabs(args)
    cp = _checkpoint(args, vocabs)
    items = _translated(args, args.corpus)
    index = pipeline.build_index(cp, items, vocabs)
    save_index(index, args.out, pipeline.translation_vocab(vocabs).checksum(), cp.rules_checksum)
    print(f"indexed {len(index)} snippets")
    return EXIT_OK


def cmd_search(args) -> int:
    if not Path(args.index).exists():
        print(f"error: index not found: {args.index}", file=sys.stderr)
        return EXIT_RUNTIME
    vocabs = _vocabs(args)
    cp = _checkpoint(args, vocabs)
    index, _ = load_index(args.index, pipeline.translation_vocab(vocabs).checksum(), cp.rules_checksum)
    for r in pipeline.run_search(cp, vocabs, index, args.query, args.k):
        print(f"{r.rank}\t{r.snippet_id}\t{r.score:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    vocabs = _vocabs(args)
    cp = _checkpoint(args, vocabs)
    items = _translated(args, args.test)
    report = pipeline.evaluate_checkpoint(cp, items, vocabs, args.cutoff).report()
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
    sys.stdout.write(report)
    return EXIT_OK


def cmd_split(args) -> int:
    records = read_corpus(args.corpus)
    train, test, meta = split_corpus(records, args.test_size, args.seed)
    write_corpus(train, args.train_out)
    write_corpus(test, args.test_out)
    meta["skipped_lines"] = records.skipped
    text = json.dumps(meta, sort_keys=True)
    if args.meta_out:
        Path(args.meta_out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    write_corpus(toy_corpus(args.n, args.seed), args.out)
    return EXIT_OK


def _add_common(p, *, vocab=False, corpus=False):
    p.add_argument("--rules", help="rule file (default: the bundled JVM rules)")
    if corpus:
        p.add_argument("--work-dir", help="directory for external compile/disassemble runs and their cache")
        p.add_argument("--workers", type=int, default=1)
    if vocab:
        p.add_argument("--vocab", help="shared vocabulary file")
        p.add_argument("--comment-vocab")
        p.add_argument("--translation-vocab")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="instrsearch", description="Code search over translated bytecode instructions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("translate", help="disassembly (or source) to instruction sentences")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--source", action="store_true", help="input is Java source; compile and disassemble it")
    p.add_argument("--graph", choices=["dot", "json"])
    p.add_argument("--work-dir")
    _add_common(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("build-vocab", help="build the word mapping from a training corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=15000)
    p.add_argument("--separate", action="store_true", help="separate comment and translation vocabularies")
    _add_common(p, corpus=True)
    p.set_defaults(func=cmd_build_vocab)

    d = TrainConfig()
    p = sub.add_parser("train", help="train both encoders")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--hidden-dim", type=int, default=d.hidden_dim)
    p.add_argument("--margin", type=float, default=d.margin)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--dropout", type=float, default=d.dropout)
    p.add_argument("--val-fraction", type=float, default=d.val_fraction)
    p.add_argument("--max-len", type=int, default=d.max_len)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="write the per-epoch log here instead of stderr")
    _add_common(p, vocab=True, corpus=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="embed a corpus's snippets into a search index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, vocab=True, corpus=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="rank indexed snippets for a natural-language query")
    p.add_argument("--index", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("-k", type=int, default=10)
    _add_common(p, vocab=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="distractor evaluation on a test corpus")
    p.add_argument("--test", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cutoff", type=int, default=10)
    p.add_argument("--out", help="also write the report here")
    _add_common(p, vocab=True, corpus=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("split", help="deterministic train/test split of a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--meta-out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="write a generated toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(exc.usage or parser.format_usage())
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (InstrSearchError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
