"""Context-aware instruction translation.

One top-to-bottom pass over a method's instructions simulates a symbolic
operand stack and local-variable array, fills each rule template with the
collected context, and records which instruction consumed which other
instruction's result (data edges) and where branches go (control edges).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .disasm import NEWARRAY_TYPES, Instruction, MethodDisassembly, UnknownSlot, resolve_variable
from .errors import InstrSearchError
from .ruleset import (
    BRANCH_OPCODES,
    DESCRIPTOR,
    DIMS,
    Category,
    RuleSet,
    TranslationRule,
)

GENERIC_VALUE = "value"
EMPTY_ARGS = "nothing"
SENTENCE_BOUNDARY = "."

_CONSTANT_PUSHERS = frozenset(
    ["aconst_null", "iconst", "lconst", "fconst", "dconst", "bipush", "sipush", "ldc", "ldc_w", "ldc2_w"]
)
_STATIC_CALLS = frozenset(["invokestatic", "invokedynamic"])
_NEWARRAY_NAMES = {code: name for name, code in NEWARRAY_TYPES.items()}
_PLACEHOLDER = re.compile(r"\[(pc|pv|ps|pi)\]")
_DESCRIPTOR = re.compile(r"\(([^()]*)\)(\S+)$")
_FIELD_TYPE = re.compile(r"\[*(?:[BCDFIJSZ]|L[^;]+;)")


class TranslationError(InstrSearchError):
    pass


class StackOverflowSim(TranslationError):
    def __init__(self, index: int, max_stack: int):
        super().__init__(f"instruction {index} pushes past the declared max_stack={max_stack}")
        self.index = index
        self.max_stack = max_stack


@dataclass(frozen=True)
class SymbolicValue:
    text: str
    producer_index: int


@dataclass
class SimState:
    stack: list[SymbolicValue] = field(default_factory=list)
    locals: list[Optional[str]] = field(default_factory=list)
    max_stack: Optional[int] = None

    @classmethod
    def for_method(cls, md: MethodDisassembly) -> "SimState":
        return cls([], [None] * (md.max_locals or 0), md.max_stack)

    def push(self, value: SymbolicValue, at_index: int) -> None:
        if self.max_stack is not None and len(self.stack) >= self.max_stack:
            raise StackOverflowSim(at_index, self.max_stack)
        self.stack.append(value)

    def set_local(self, slot: int, name: str) -> None:
        if slot >= len(self.locals):
            self.locals.extend([None] * (slot + 1 - len(self.locals)))
        self.locals[slot] = name

    def local(self, slot: int) -> Optional[str]:
        return self.locals[slot] if slot < len(self.locals) else None


@dataclass
class InstructionDependencyGraph:
    nodes: list[int] = field(default_factory=list)
    data_edges: list[tuple[int, int]] = field(default_factory=list)
    control_edges: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class Translation:
    method_id: str
    sentences: list[tuple[int, str]] = field(default_factory=list)
    dependency_graph: InstructionDependencyGraph = field(default_factory=InstructionDependencyGraph)
    final_stack_depth: int = 0

    def lines(self) -> list[str]:
        return [f"{idx}:\t{sentence}" for idx, sentence in self.sentences]

    def text(self) -> str:
        """All sentences as one stream, each closed by a sentence-boundary token."""
        return " ".join(f"{s} {SENTENCE_BOUNDARY}" for _, s in self.sentences)


def descriptor_arity(comment: Optional[str]) -> Optional[tuple[int, bool]]:
    """``(parameter count, returns a value)`` from a call's descriptor comment."""
    if not comment:
        return None
    m = _DESCRIPTOR.search(comment.strip())
    if not m:
        return None
    params = _FIELD_TYPE.findall(m.group(1))
    return len(params), m.group(2) != "V"


def _simple_class(name: str) -> str:
    name = name.strip().strip('"')
    dims = len(name) - len(name.lstrip("["))
    name = name.lstrip("[")
    if dims and name.startswith("L") and name.endswith(";"):
        name = name[1:-1]
    elif dims and len(name) == 1:
        name = {"I": "int", "J": "long", "D": "double", "F": "float", "Z": "boolean",
                "B": "byte", "C": "char", "S": "short"}.get(name, name)
    return name.rsplit("/", 1)[-1] + "[]" * dims


def _member_name(ref: str) -> str:
    # "java/util/Collections.swap:(Ljava/util/List;II)V" -> "Collections.swap"
    ref = ref.split(":", 1)[0] if not ref.startswith("#") else ref.split(":")[1]
    owner, _, member = ref.rpartition(".")
    member = member.strip('"')
    return f"{_simple_class(owner)}.{member}" if owner else member


def constant_text(instr: Instruction) -> Optional[str]:
    """The literal or symbolic constant an instruction carries, as rendered text."""
    op = instr.opcode
    comment = instr.descriptor_comment
    if op == "iinc":
        return str(instr.operands[1]) if len(instr.operands) > 1 else None
    if op == "newarray" and instr.operands:
        return _NEWARRAY_NAMES.get(instr.operands[0], str(instr.operands[0]))
    if comment:
        kind, _, rest = comment.partition(" ")
        rest = rest.strip()
        if kind in ("Method", "InterfaceMethod", "Field"):
            return _member_name(rest)
        if kind == "InvokeDynamic":
            return _member_name(rest)
        if kind == "class":
            return _simple_class(rest)
        if kind == "String":
            return rest
        if kind in ("int", "long", "float", "double"):
            return rest.rstrip("lLfFdD") or rest
        return rest or kind
    if op in ("iconst", "lconst", "fconst", "dconst", "bipush", "sipush") and instr.operands:
        return str(instr.operands[0])
    if instr.operands:
        return f"#{instr.operands[0]}"
    return None


def _pop_count(rule: TranslationRule, instr: Instruction) -> int:
    if rule.pop_count == DESCRIPTOR:
        arity = descriptor_arity(instr.descriptor_comment)
        if arity is None:
            return 0
        return arity[0] + (0 if instr.opcode in _STATIC_CALLS else 1)
    if rule.pop_count == DIMS:
        return instr.operands[1] if len(instr.operands) > 1 else 1
    return int(rule.pop_count)


def _push_count(rule: TranslationRule, instr: Instruction) -> int:
    if rule.push_count == DESCRIPTOR:
        arity = descriptor_arity(instr.descriptor_comment)
        return int(arity is not None and arity[1])
    return int(rule.push_count)


def pop_for(rule: TranslationRule, instr: Instruction, state: SimState) -> list[SymbolicValue]:
    """Pop the values ``instr`` consumes, top of stack first.

    A missing value (the linear pass cannot see values that reach a join point
    along another path) is replaced by the generic token produced by ``instr``
    itself, which callers treat as "no data edge".
    """
    if rule.category not in (Category.PO, Category.POU, Category.SV) and rule.pop_count == 0:
        raise ValueError(f"{rule.opcode} ({rule.category.value}) does not pop")
    popped = []
    for _ in range(_pop_count(rule, instr)):
        if state.stack:
            popped.append(state.stack.pop())
        else:
            popped.append(SymbolicValue(GENERIC_VALUE, instr.index))
    return popped


def render_result(rule: TranslationRule, popped: list[SymbolicValue], instr: Instruction) -> SymbolicValue:
    """The value a pop-operate-push instruction leaves on the stack."""
    if rule.category != Category.POU:
        raise ValueError(f"{rule.opcode} is {rule.category.value}, not POU")
    return SymbolicValue(GENERIC_VALUE, instr.index)


def _variable_name(md: MethodDisassembly, state: SimState, slot: int, instr: Instruction) -> str:
    try:
        return resolve_variable(md, slot, instr.index).name
    except UnknownSlot:
        pass
    # a store opens its variable's scope just after itself: take the nearest
    # scope for this slot that starts later
    following = [e for e in md.variable_table if e.slot == slot and e.start > instr.index]
    if following:
        return min(following, key=lambda e: e.start).name
    return state.local(slot) or f"var{slot}"


def _fill(template: str, *, pc: Optional[str], pv: Optional[str], ps: list[SymbolicValue], pi: Optional[int]) -> str:
    n_ps = template.count("[ps]")
    if ps and n_ps == len(ps):
        # one placeholder per value: operand order, deepest value first
        ps_texts = [v.text for v in reversed(ps)]
    else:
        joined = ", ".join(v.text for v in ps) if ps else EMPTY_ARGS
        ps_texts = [joined] * n_ps
    ps_iter = iter(ps_texts)

    def sub(m: re.Match) -> str:
        kind = m.group(1)
        if kind == "ps":
            return next(ps_iter)
        if kind == "pc":
            return pc if pc is not None else GENERIC_VALUE
        if kind == "pv":
            return pv if pv is not None else GENERIC_VALUE
        return str(pi) if pi is not None else GENERIC_VALUE

    return _PLACEHOLDER.sub(sub, template)


def translate_method(md: MethodDisassembly, rs: RuleSet) -> Translation:
    """Translate one method into one sentence per instruction plus its dependency graph."""
    state = SimState.for_method(md)
    graph = InstructionDependencyGraph(nodes=[ins.index for ins in md.instructions])
    sentences: list[tuple[int, str]] = []

    def add_node(idx: int) -> None:
        if idx not in graph.nodes:
            graph.nodes.append(idx)

    for instr in md.instructions:
        rule = rs[instr.opcode]
        cat = rule.category

        popped: list[SymbolicValue] = []
        if cat in (Category.PO, Category.POU, Category.SV) or rule.pop_count != 0:
            popped = pop_for(rule, instr, state)
            for v in popped:
                if v.producer_index != instr.index:
                    edge = (instr.index, v.producer_index)
                    if edge not in graph.data_edges:
                        graph.data_edges.append(edge)

        variable = None
        if "[pv]" in rule.template and instr.operands:
            slot = instr.operands[0]
            variable = _variable_name(md, state, slot, instr)
            state.set_local(slot, variable)

        target = None
        if instr.opcode in BRANCH_OPCODES and instr.operands:
            target = instr.operands[0]
            graph.control_edges.append((instr.index, target))
            add_node(target)

        pc = constant_text(instr)

        if rule.repush:
            for pos in rule.repush:
                state.push(SymbolicValue(popped[pos - 1].text, instr.index), instr.index)
        else:
            for _ in range(_push_count(rule, instr)):
                if cat == Category.POU:
                    value = render_result(rule, popped, instr)
                elif cat == Category.SV and variable is not None:
                    value = SymbolicValue(variable, instr.index)
                elif instr.opcode == "aconst_null":
                    value = SymbolicValue("null", instr.index)
                elif instr.opcode in _CONSTANT_PUSHERS and pc is not None:
                    value = SymbolicValue(pc, instr.index)
                else:
                    value = SymbolicValue(GENERIC_VALUE, instr.index)
                state.push(value, instr.index)

        sentences.append((instr.index, _fill(rule.template, pc=pc, pv=variable, ps=popped, pi=target)))

    return Translation(md.method_id, sentences, graph, len(state.stack))


def export_graph(t: Translation, format: str = "dot") -> str:
    """Serialize the dependency graph; data edges solid, control edges dashed."""
    g = t.dependency_graph
    nodes = sorted(g.nodes)
    if format == "json":
        return json.dumps(
            {
                "method_id": t.method_id,
                "nodes": nodes,
                "data_edges": [list(e) for e in g.data_edges],
                "control_edges": [list(e) for e in g.control_edges],
            },
            sort_keys=True,
        )
    if format != "dot":
        raise ValueError(f"unknown graph format {format!r}")
    name = t.method_id.replace("\\", "\\\\").replace('"', '\\"')
    out = [f'digraph "{name}" {{']
    out += [f"  {n};" for n in nodes]
    out += [f"  {a} -> {b};" for a, b in g.data_edges]
    out += [f"  {a} -> {b} [style=dashed];" for a, b in g.control_edges]
    out.append("}")
    return "\n".join(out) + "\n"
