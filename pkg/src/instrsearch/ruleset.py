"""Per-opcode translation templates and the six stack/variable interaction categories."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Union

from .errors import InstrSearchError

DESCRIPTOR = "descriptor"
DIMS = "dims"

PLACEHOLDERS = ("[pc]", "[pv]", "[ps]", "[pi]")
_BRACKETED = re.compile(r"\[[^\[\]]*\]")
# push-only by category, yet it consumes the array length
_PU_CONSUMERS = frozenset(["anewarray"])


class Category(str, Enum):
    PU = "PU"    # push only
    PO = "PO"    # pop only
    POU = "POU"  # pop, operate, push result
    V = "V"      # local variable only
    SV = "SV"    # stack and local variable
    O = "O"      # neither


class RuleError(InstrSearchError):
    pass


class DuplicateOpcode(RuleError):
    def __init__(self, opcode: str):
        super().__init__(f"duplicate rule for opcode {opcode!r}")
        self.opcode = opcode


class BadPlaceholder(RuleError):
    def __init__(self, opcode: str, detail: str = ""):
        super().__init__(f"bad template for {opcode!r}: {detail}")
        self.opcode = opcode


class CategoryMismatch(RuleError):
    def __init__(self, opcode: str, detail: str = ""):
        super().__init__(f"rule for {opcode!r} is inconsistent with its category: {detail}")
        self.opcode = opcode


class MalformedRule(RuleError):
    def __init__(self, line_no: int, line: str):
        super().__init__(f"rule file line {line_no}: cannot parse {line.strip()!r}")
        self.line_no = line_no


class UnknownOpcode(RuleError):
    def __init__(self, opcode: str):
        super().__init__(f"no translation rule for opcode {opcode!r}")
        self.opcode = opcode


PopSpec = Union[int, str]


@dataclass(frozen=True)
class TranslationRule:
    opcode: str
    category: Category
    template: str
    pop_count: PopSpec = 0
    push_count: PopSpec = 0
    # explicit re-push order for the dup family: 1-based pop positions,
    # listed bottom to top
    repush: tuple[int, ...] = ()

    def placeholders(self) -> list[str]:
        return _BRACKETED.findall(self.template)


@dataclass(frozen=True)
class RuleSet:
    rules: dict[str, TranslationRule]
    checksum: str = field(default="", compare=False)

    def __getitem__(self, opcode: str) -> TranslationRule:
        try:
            return self.rules[opcode]
        except KeyError:
            raise UnknownOpcode(opcode) from None

    def __contains__(self, opcode: object) -> bool:
        return opcode in self.rules

    def __len__(self) -> int:
        return len(self.rules)

    def without(self, *opcodes: str) -> "RuleSet":
        return RuleSet({k: v for k, v in self.rules.items() if k not in opcodes})

    def with_rule(self, rule: TranslationRule) -> "RuleSet":
        return RuleSet({**self.rules, rule.opcode: rule})


# the category enumeration as published: "<cond>"/"<op>" families
# expand to their concrete mnemonics, "_<n>"-style fused forms collapse onto
# the base mnemonic.
TABLE1_LISTING = {
    Category.PU: """aconst_null anewarray iconst fconst bipush dconst_<d> fconst_<f>
        iconst_<i> jsr jsr_w lconst_<l> ldc ldc_w ldc2_w new sipush""",
    Category.PO: """areturn if_icmpge ireturn athrow dreturn freturn if_acmp<cond>
        if_icmp<cond> if<cond> ifnonnull ifnull invokedynamic invokeinterface
        invokespecial invokestatic invokevirtual ireturn ishl ishr lookupswitch
        lreturn monitorexit pop pop2 putfield putstatic tableswitch""",
    Category.POU: """aaload arraylength baload caload d2f d2i d2l dadd daload
        dcmp<op> ddiv dmul dneg drem dsub dup dup_x1 dup_x2 dup2 dup2_x1 dup2_x2
        f2d f2i f2l fadd faload fcmp<op> fdiv fmul fneg frem fsub getfield
        getstatic i2b i2c i2d i2f i2l i2s iadd iaload iand idiv imul ineg
        instanceof ior irem isub iushr ixor l2d l2f l2i ladd laload land lcmp
        ldiv lmul lneg lor lrem lshl lshr lsub lushr multianewarray lxor
        newarray saload swap""",
    Category.V: "iinc wide",
    Category.SV: """aastore aload aload_<n> astore astore_<n> bastore castore
        dastore dload dload_<n> dstore dstore_<n> fastore fload fload_<n> fstore
        fstore_<n> iastore iload iload_<n> istore istore_<n> lastore lload
        lload_<n> lstore lstore_<n> sastore""",
    Category.O: "goto checkcast goto_w nop ret return",
}

_FAMILIES = {
    "<cond>": {
        "if_acmp": ("eq", "ne"),
        "if_icmp": ("eq", "ne", "lt", "ge", "gt", "le"),
        "if": ("eq", "ne", "lt", "ge", "gt", "le"),
    },
    "<op>": {"dcmp": ("l", "g"), "fcmp": ("l", "g")},
}


def _expand(entry: str) -> list[str]:
    for marker, families in _FAMILIES.items():
        if entry.endswith(marker):
            stem = entry[: -len(marker)]
            return [stem + suffix for suffix in families[stem]]
    m = re.fullmatch(r"(.+)_<[a-z]>", entry)
    if m:
        return [m.group(1)]
    return [entry]


def table1_categories() -> dict[str, Category]:
    """Every base mnemonic enumerated by the category table, with its category."""
    out: dict[str, Category] = {}
    for cat, listing in TABLE1_LISTING.items():
        for entry in listing.split():
            for opcode in _expand(entry):
                if out.get(opcode, cat) != cat:
                    raise AssertionError(f"{opcode} listed under two categories")
                out[opcode] = cat
    return out


BRANCH_OPCODES = frozenset(
    [op for op, cat in table1_categories().items() if op.startswith("if")]
    + ["goto", "goto_w", "jsr", "jsr_w", "tableswitch", "lookupswitch"]
)
SWITCH_OPCODES = frozenset(["tableswitch", "lookupswitch"])

_FORBIDDEN = {
    Category.PU: ("[ps]", "[pv]"),
    Category.PO: ("[pv]",),
    Category.POU: ("[pv]",),
    Category.V: ("[ps]",),
    Category.SV: (),
    Category.O: ("[ps]", "[pv]"),
}


def template_problems(rule: TranslationRule) -> list[str]:
    """Syntax problems in the template itself (unknown or unbalanced placeholders)."""
    problems = []
    for ph in rule.placeholders():
        if ph not in PLACEHOLDERS:
            problems.append(f"unknown placeholder {ph}")
    stripped = _BRACKETED.sub("", rule.template)
    if "[" in stripped or "]" in stripped:
        problems.append("unbalanced bracket")
    if not rule.template.strip():
        problems.append("empty template")
    return problems


def category_problems(rule: TranslationRule) -> list[str]:
    """Ways in which the template or stack effect contradicts the rule's category."""
    problems = []
    phs = set(rule.placeholders())
    cat = rule.category
    for ph in _FORBIDDEN[cat]:
        if ph in phs:
            problems.append(f"{cat.value} rule may not contain {ph}")
    if cat in (Category.V, Category.O):
        if rule.pop_count != 0 or rule.push_count != 0:
            problems.append(f"{cat.value} rule must not touch the operand stack")
    if cat == Category.PU and rule.push_count != 1:
        problems.append("PU rule must push exactly one value")
    if cat == Category.PU and rule.pop_count != 0 and rule.opcode not in _PU_CONSUMERS:
        problems.append("PU rule must not pop")
    if cat == Category.POU and rule.push_count == 0:
        problems.append("POU rule must push a result")
    if cat == Category.SV and not phs & {"[pv]", "[ps]"}:
        problems.append("SV rule needs [pv] or [ps]")
    if "[ps]" in phs and rule.pop_count == 0:
        problems.append("[ps] without any popped value")
    if rule.opcode in BRANCH_OPCODES and "[pi]" not in phs:
        problems.append("branch rule lacks the jump placeholder [pi]")
    if "[pi]" in phs and rule.opcode not in BRANCH_OPCODES:
        problems.append("[pi] on a non-branch opcode")
    return problems


def _parse_count(spec: str, word: str, line_no: int, line: str) -> tuple[PopSpec, tuple[int, ...]]:
    parts = spec.split()
    if len(parts) < 2 or parts[0] != word:
        raise MalformedRule(line_no, line)
    args = parts[1:]
    if len(args) == 1 and args[0] in (DESCRIPTOR, DIMS):
        return args[0], ()
    if len(args) == 1 and args[0].isdigit():
        return int(args[0]), ()
    if word == "push" and all(re.fullmatch(r"@\d+", a) for a in args):
        order = tuple(int(a[1:]) for a in args)
        return len(order), order
    raise MalformedRule(line_no, line)


def load_rules(source: str) -> RuleSet:
    """Parse and validate rule-file text.

    Rows are ``mnemonic | category | template | pop spec | push spec``;
    ``#`` starts a comment.  Raises on the first invalid row.
    """
    rules: dict[str, TranslationRule] = {}
    for line_no, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = [c.strip() for c in line.split("|")]
        if len(cols) != 5:
            raise MalformedRule(line_no, raw)
        opcode, cat_text, template, pop_text, push_text = cols
        try:
            category = Category(cat_text)
        except ValueError:
            raise MalformedRule(line_no, raw) from None
        pop, _ = _parse_count(pop_text, "pop", line_no, raw)
        push, repush = _parse_count(push_text, "push", line_no, raw)
        if pop == DIMS and opcode != "multianewarray":
            raise MalformedRule(line_no, raw)
        if repush and (not isinstance(pop, int) or max(repush) > pop):
            raise MalformedRule(line_no, raw)
        rule = TranslationRule(opcode, category, template, pop, push, repush)
        if opcode in rules:
            raise DuplicateOpcode(opcode)
        bad = template_problems(rule)
        if bad:
            raise BadPlaceholder(opcode, "; ".join(bad))
        mismatch = category_problems(rule)
        if mismatch:
            raise CategoryMismatch(opcode, "; ".join(mismatch))
        rules[opcode] = rule
    return RuleSet(rules, rules_checksum(rules))


def rules_checksum(rules: dict[str, TranslationRule]) -> str:
    """sha256 over the parsed rules; row order, comments and spacing do not matter."""
    canon = "\n".join(
        f"{r.opcode}|{r.category.value}|{r.template}|{r.pop_count}|{r.push_count}|{r.repush}"
        for r in sorted(rules.values(), key=lambda r: r.opcode)
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def default_rules_text() -> str:
    return resources.files("instrsearch").joinpath("rules/jvm.rules").read_text(encoding="utf-8")


@lru_cache(maxsize=1)
def default_rules() -> RuleSet:
    """The shipped JVM rule set."""
    return load_rules(default_rules_text())


def category_of(rs: RuleSet, opcode: str) -> Category:
    return rs[opcode].category


@dataclass
class ValidationReport:
    missing: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    bad_templates: list[str] = field(default_factory=list)
    # informational only; does not make the report non-empty
    notes: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.missing or self.violations or self.bad_templates)

    def __bool__(self) -> bool:
        return not self.empty


def validate_ruleset(rs: RuleSet) -> ValidationReport:
    """Cross-check a rule set against the category table.

    Reports opcodes the table lists but the rule set lacks, rules whose
    category or placeholders contradict the table or each other, and
    templates that do not parse.
    """
    report = ValidationReport()
    table = table1_categories()
    report.missing = sorted(op for op in table if op not in rs.rules)
    for opcode in sorted(rs.rules):
        rule = rs.rules[opcode]
        bad = template_problems(rule)
        if bad:
            report.bad_templates.append(f"{opcode}: {'; '.join(bad)}")
        expected = table.get(opcode)
        if expected is not None and expected != rule.category:
            report.violations.append(
                f"{opcode}: category {rule.category.value}, table says {expected.value}"
            )
        for problem in category_problems(rule):
            report.violations.append(f"{opcode}: {problem}")
        if opcode in SWITCH_OPCODES:
            report.notes.append(f"{opcode}: partial rendering, only the default target is listed")
    return report
