"""Small generated corpora for desk-scale training runs and tests.

Each record is a short Java method, its disassembly in the disassembler's
text format, and a one-line comment that shares words with the method's
identifiers.  Nothing here calls an external tool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VERBS = (
    "compute", "count", "find", "check", "update", "remove", "scale", "merge",
    "parse", "load", "store", "reset", "copy", "clear", "build", "fetch",
    "limit", "shift", "apply", "match",
)
NOUNS = (
    "price", "item", "order", "user", "node", "buffer", "score", "weight",
    "length", "matrix", "queue", "file", "name", "record", "key", "balance",
    "level", "offset", "token", "color",
)

# (mnemonic, operand text or branch label, comment, byte length); a label
# names the position of the target op in the list
_Op = tuple[str, str, str, int]


def _cap(word: str) -> str:
    return word[0].upper() + word[1:]


@dataclass(frozen=True)
class ToyMethod:
    name: str
    source: str
    comment: str
    descriptor: str
    signature: str
    ops: tuple[_Op, ...]
    locals: tuple[tuple[int, str, str, int], ...]  # (slot, name, type signature, scope start offset)
    max_stack: int


def _accumulate(verb: str, a: str, b: str) -> ToyMethod:
    helper = f"{verb}{_cap(b)}"
    name = f"{verb}{_cap(a)}{_cap(b)}s"
    ops = [
        ("iconst_0", "", "", 1),
        ("istore_2", "", "", 1),
        ("iconst_0", "", "", 1),
        ("istore_3", "", "", 1),
        ("iload_3", "", "", 1),
        ("aload_1", "", "", 1),
        ("arraylength", "", "", 1),
        ("if_icmpge", "@end", "", 3),
        ("iload_2", "", "", 1),
        ("aload_0", "", "", 1),
        ("aload_1", "", "", 1),
        ("iload_3", "", "", 1),
        ("iaload", "", "", 1),
        ("invokevirtual", "#2", f"Method {helper}:(I)I", 3),
        ("iadd", "", "", 1),
        ("istore_2", "", "", 1),
        ("iinc", "3, 1", "", 3),
        ("goto", "@loop", "", 3),
        ("iload_2", "", "", 1),
        ("ireturn", "", "", 1),
    ]
    labels = {"@loop": 4, "@end": 18}  # op positions
    src = (
        f"public int {name}(int[] {b}s) {{\n"
        f"    int {a} = 0;\n"
        f"    for (int i = 0; i < {b}s.length; i++) {{\n"
        f"        {a} += {helper}({b}s[i]);\n"
        f"    }}\n"
        f"    return {a};\n"
        f"}}\n"
    )
    comment = f"{_cap(verb)} the {a} over all {b}s."
    return _finish(name, src, comment, "([I)I", f"public int {name}(int[])", ops, labels,
                   [(0, "this", "LToy;"), (1, f"{b}s", "[I"), (2, a, "I", 2), (3, "i", "I", 4)], 4)


def _guarded_set(verb: str, a: str, b: str) -> ToyMethod:
    name = f"{verb}{_cap(a)}If{_cap(b)}"
    ops = [
        ("iload_1", "", "", 1),
        ("aload_0", "", "", 1),
        ("getfield", "#2", f"Field {b}:I", 3),
        ("if_icmple", "@skip", "", 3),
        ("aload_0", "", "", 1),
        ("aload_0", "", "", 1),
        ("iload_1", "", "", 1),
        ("invokevirtual", "#3", f"Method {verb}:(I)I", 3),
        ("putfield", "#4", f"Field {a}:I", 3),
        ("aload_0", "", "", 1),
        ("getfield", "#4", f"Field {a}:I", 3),
        ("ireturn", "", "", 1),
    ]
    labels = {"@skip": 9}
    src = (
        f"public int {name}(int {a}Value) {{\n"
        f"    if ({a}Value > {b}) {{\n"
        f"        {a} = {verb}({a}Value);\n"
        f"    }}\n"
        f"    return {a};\n"
        f"}}\n"
    )
    comment = f"{_cap(verb)} the {a} when it exceeds the {b}."
    return _finish(name, src, comment, "(I)I", f"public int {name}(int)", ops, labels,
                   [(0, "this", "LToy;"), (1, f"{a}Value", "I")], 3)


def _list_call(verb: str, a: str, b: str) -> ToyMethod:
    name = f"{verb}{_cap(a)}From{_cap(b)}List"
    ops = [
        ("aload_1", "", "", 1),
        ("invokeinterface", "#2,  1", "InterfaceMethod java/util/List.size:()I", 5),
        ("istore_2", "", "", 1),
        ("aload_0", "", "", 1),
        ("aload_1", "", "", 1),
        ("iload_2", "", "", 1),
        ("iconst_1", "", "", 1),
        ("isub", "", "", 1),
        ("invokeinterface", "#3,  2", "InterfaceMethod java/util/List.get:(I)Ljava/lang/Object;", 5),
        ("checkcast", "#4", f"class {_cap(a)}", 3),
        ("invokevirtual", "#5", f"Method {verb}{_cap(a)}:(L{_cap(a)};)I", 3),
        ("ireturn", "", "", 1),
    ]
    src = (
        f"public int {name}(java.util.List<{_cap(a)}> {b}s) {{\n"
        f"    int size = {b}s.size();\n"
        f"    return {verb}{_cap(a)}(({_cap(a)}) {b}s.get(size - 1));\n"
        f"}}\n"
    )
    comment = f"{_cap(verb)} the last {a} in the {b} list."
    return _finish(name, src, comment, "(Ljava/util/List;)I", f"public int {name}(java.util.List<{_cap(a)}>)",
                   ops, {}, [(0, "this", "LToy;"), (1, f"{b}s", "Ljava/util/List;"), (2, "size", "I", 3)], 4)


def _string_test(verb: str, a: str, b: str) -> ToyMethod:
    name = f"is{_cap(a)}{_cap(b)}"
    ops = [
        ("aload_1", "", "", 1),
        ("ldc", "#2", f"String {b}", 2),
        ("invokevirtual", "#3", "Method java/lang/String.equals:(Ljava/lang/Object;)Z", 3),
        ("ifeq", "@no", "", 3),
        ("aload_0", "", "", 1),
        ("aload_1", "", "", 1),
        ("invokevirtual", "#4", f"Method {verb}{_cap(a)}:(Ljava/lang/String;)Z", 3),
        ("ireturn", "", "", 1),
        ("iconst_0", "", "", 1),
        ("ireturn", "", "", 1),
    ]
    labels = {"@no": 8}
    src = (
        f"public boolean {name}(String {a}) {{\n"
        f"    if ({a}.equals(\"{b}\")) {{\n"
        f"        return {verb}{_cap(a)}({a});\n"
        f"    }}\n"
        f"    return false;\n"
        f"}}\n"
    )
    comment = f"Check whether the {a} is {b} and {verb} it."
    return _finish(name, src, comment, "(Ljava/lang/String;)Z", f"public boolean {name}(java.lang.String)",
                   ops, labels, [(0, "this", "LToy;"), (1, a, "Ljava/lang/String;")], 3)


SHAPES = (_accumulate, _guarded_set, _list_call, _string_test)


def _finish(name, src, comment, descriptor, signature, ops, labels, locals_, max_stack) -> ToyMethod:
    offsets = np.cumsum([0] + [size for *_, size in ops]).tolist()
    resolved = []
    for mnemonic, operand, cmt, size in ops:
        if operand in labels:
            operand = str(offsets[labels[operand]])
        resolved.append((mnemonic, operand, cmt, size))
    # a local's scope opens at the op after its first store
    scoped = tuple((slot, nm, sig, offsets[rest[0]] if rest else 0) for slot, nm, sig, *rest in locals_)
    return ToyMethod(name, src, comment, descriptor, signature, tuple(resolved), scoped, max_stack)


def render_disassembly(tm: ToyMethod, class_name: str = "Toy") -> str:
    """The method as ``javap -c -l -p``-style text inside its class."""
    lines = [f'Compiled from "{class_name}.java"', f"public class {class_name} {{", f"  {tm.signature};",
             f"    descriptor: {tm.descriptor}", "    Code:"]
    offset = 0
    lines.append(f"      stack={tm.max_stack}, locals={len(tm.locals)}, args_size={_args_size(tm)}")
    for mnemonic, operand, cmt, size in tm.ops:
        text = f"{offset:>10}: {mnemonic}"
        if operand:
            text = f"{text:<28}{operand}"
        if cmt:
            text = f"{text:<47}// {cmt}"
        lines.append(text)
        offset += size
    lines.append("    LocalVariableTable:")
    lines.append("      Start  Length  Slot  Name   Signature")
    for slot, name, sig, start in tm.locals:
        lines.append(f"{start:>11}{offset - start:>8}{slot:>6} {name:>5}   {sig}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _args_size(tm: ToyMethod) -> int:
    params = tm.signature.split("(", 1)[1].rstrip(")")
    return 1 + (len(params.split(",")) if params else 0)


def toy_methods(n: int, seed: int) -> list[ToyMethod]:
    """``n`` distinct methods drawn without replacement from all (shape, verb, noun, noun) combinations."""
    rng = np.random.default_rng([seed, 5])
    total = len(SHAPES) * len(VERBS) * len(NOUNS) * (len(NOUNS) - 1)
    if n > total:
        raise ValueError(f"at most {total} distinct toy methods")
    picks = rng.choice(total, size=n, replace=False)
    out = []
    for code in picks.tolist():
        code, shape = divmod(code, len(SHAPES))
        code, v = divmod(code, len(VERBS))
        a, b = divmod(code, len(NOUNS) - 1)
        b = b if b < a else b + 1
        out.append(SHAPES[shape](VERBS[v], NOUNS[a], NOUNS[b]))
    return out


def toy_corpus(n: int, seed: int) -> list[dict]:
    """Records in the JSONL corpus layout, with pre-generated disassembly."""
    return [
        {"id": f"toy{i:04d}", "code": tm.source, "docstring": tm.comment, "disassembly": render_disassembly(tm)}
        for i, tm in enumerate(toy_methods(n, seed))
    ]
