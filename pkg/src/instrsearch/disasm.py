"""Parse the text printed by a class-file disassembler into per-method records.

The accepted format is what ``javap -c -l`` (optionally ``-v -p``) prints: a
method header line, a ``Code:`` section with numbered instruction lines, and
an optional ``LocalVariableTable:`` block.  A bare run of numbered instruction
lines (no header) is accepted too and becomes one anonymous method.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import InstrSearchError

ANONYMOUS_METHOD = "<anonymous>"


class DisassemblyError(InstrSearchError):
    pass


class MalformedLine(DisassemblyError):
    def __init__(self, line_no: int, line: str = ""):
        super().__init__(f"line {line_no}: cannot parse {line.strip()!r}")
        self.line_no = line_no
        self.line = line


class MissingCode(DisassemblyError):
    def __init__(self, method_id: str):
        super().__init__(f"method {method_id!r} has no Code section")
        self.method_id = method_id


class UnknownSlot(DisassemblyError):
    def __init__(self, slot: int, at_index: int | None = None):
        where = "" if at_index is None else f" at instruction {at_index}"
        super().__init__(f"no local variable covers slot {slot}{where}")
        self.slot = slot
        self.at_index = at_index


@dataclass(frozen=True)
class Instruction:
    index: int
    opcode: str
    operands: tuple[int, ...] = ()
    descriptor_comment: Optional[str] = None


@dataclass(frozen=True)
class LocalVariableEntry:
    start: int
    length: int
    slot: int
    name: str
    signature: str

    def covers(self, at_index: int) -> bool:
        return self.start <= at_index < self.start + self.length


@dataclass
class MethodDisassembly:
    method_id: str
    instructions: list[Instruction] = field(default_factory=list)
    variable_table: list[LocalVariableEntry] = field(default_factory=list)
    # None when the listing was produced without -v (no "stack=..." line)
    max_stack: Optional[int] = None
    max_locals: Optional[int] = None

    def next_index(self, at_index: int) -> Optional[int]:
        """Offset of the instruction following the one at ``at_index``."""
        for ins in self.instructions:
            if ins.index > at_index:
                return ins.index
        return None


_FUSED = re.compile(r"^(.+?)_(m1|\d+)$")

# javap prints wide-prefixed local-variable instructions as "<op>_w"
_WIDE_FORMS = {
    f"{op}_w": op
    for op in (
        "iload", "lload", "fload", "dload", "aload",
        "istore", "lstore", "fstore", "dstore", "astore",
        "iinc", "ret",
    )
}

NEWARRAY_TYPES = {
    "boolean": 4, "char": 5, "float": 6, "double": 7,
    "byte": 8, "short": 9, "int": 10, "long": 11,
}

_INSTR = re.compile(r"^\s*(\d+):\s+([a-z][a-z0-9_]*)(?:\s+(.*?))?\s*$")
_STACK = re.compile(r"^\s*stack=(\d+),\s*locals=(\d+)(?:,\s*args_size=\d+)?\s*$")
_LVT_ROW = re.compile(r"^\s*(\d+)\s+(\d+)\s+(\d+)\s+(\S+)\s+(\S+)\s*$")
_LVT_HEAD = re.compile(r"^\s*Start\s+Length\s+Slot\s+Name\s+Signature\s*$")
_SECTION = re.compile(r"^\s*([A-Za-z][A-Za-z ]*?):(?:\s.*)?$")
_SWITCH_CASE = re.compile(r"^\s*(-?\d+|default):\s*(-?\d+)\s*$")


def split_fused_operand(opcode_text: str) -> tuple[str, Optional[int]]:
    """Split ``istore_2`` into ``("istore", 2)`` and ``iconst_m1`` into ``("iconst", -1)``."""
    m = _FUSED.match(opcode_text)
    if not m:
        return opcode_text, None
    suffix = m.group(2)
    return m.group(1), -1 if suffix == "m1" else int(suffix)


def _is_method_header(stripped: str) -> bool:
    if not stripped.endswith(";") or stripped.startswith("#"):
        return False
    if "//" in stripped or ": " in stripped or "=" in stripped:
        return False
    return "(" in stripped or stripped == "static {};"


def _parse_operands(text: str, line_no: int, line: str) -> tuple[list[int], Optional[str]]:
    comment = None
    if "//" in text:
        text, comment = text.split("//", 1)
        comment = comment.strip() or None
    operands: list[int] = []
    for tok in re.split(r"[,\s]+", text.strip()):
        if not tok:
            continue
        if tok.startswith("#"):
            tok = tok[1:]
        if re.fullmatch(r"-?\d+", tok):
            operands.append(int(tok))
        elif tok in NEWARRAY_TYPES:
            operands.append(NEWARRAY_TYPES[tok])
        else:
            raise MalformedLine(line_no, line)
    return operands, comment


class _Parser:
    def __init__(self) -> None:
        self.methods: list[MethodDisassembly] = []
        self.current: Optional[MethodDisassembly] = None
        self.has_code = False
        self.skip_missing_code = False
        self.mode: Optional[str] = None
        self.switch: Optional[tuple[int, str, Optional[str], list[int]]] = None
        self.switch_default: Optional[int] = None

    def start_method(self, method_id: str, *, abstract: bool = False) -> None:
        self.finish_method()
        self.current = MethodDisassembly(method_id)
        self.has_code = False
        self.skip_missing_code = abstract
        self.mode = "header"

    def finish_method(self) -> None:
        md = self.current
        if md is None:
            return
        self.current = None
        self.mode = None
        if not self.has_code:
            if self.skip_missing_code:
                return
            raise MissingCode(md.method_id)
        self.methods.append(md)

    def add_instruction(self, ins: Instruction, line_no: int, line: str) -> None:
        md = self.current
        assert md is not None
        if md.instructions and ins.index <= md.instructions[-1].index:
            raise MalformedLine(line_no, line)
        md.instructions.append(ins)

    def feed(self, line_no: int, line: str) -> None:
        stripped = line.strip()

        if self.mode == "switch":
            self._feed_switch(line_no, line, stripped)
            return

        if not stripped:
            return

        m = _INSTR.match(line)
        if m and self.mode == "code":
            self._feed_instruction(m, line_no, line)
            return
        if m and self.current is None:
            self.current = MethodDisassembly(ANONYMOUS_METHOD)
            self.has_code = True
            self.mode = "code"
            self._feed_instruction(m, line_no, line)
            return

        sm = _STACK.match(line)
        if sm and self.current is not None and self.mode == "code":
            self.current.max_stack = int(sm.group(1))
            self.current.max_locals = int(sm.group(2))
            return

        if _is_method_header(stripped):
            mods = stripped.split("(")[0].split()
            self.start_method(stripped.rstrip(";"), abstract="abstract" in mods or "native" in mods)
            return

        if stripped == "Code:":
            if self.current is None:
                self.current = MethodDisassembly(ANONYMOUS_METHOD)
            self.has_code = True
            self.mode = "code"
            return

        sec = _SECTION.match(line)
        if sec and self.current is not None:
            self.mode = "lvt" if sec.group(1) == "LocalVariableTable" else "other"
            return

        if stripped == "}":
            self.finish_method()
            return

        if self.mode == "lvt":
            if _LVT_HEAD.match(line):
                return
            row = _LVT_ROW.match(line)
            if row:
                start, length, slot = (int(row.group(i)) for i in (1, 2, 3))
                assert self.current is not None
                self.current.variable_table.append(
                    LocalVariableEntry(start, length, slot, row.group(4), row.group(5))
                )
                return
            raise MalformedLine(line_no, line)

        if self.mode == "code":
            raise MalformedLine(line_no, line)
        # everything else (class header, constant pool, line tables, stack
        # maps, exception tables) carries nothing we use

    def _feed_instruction(self, m: re.Match, line_no: int, line: str) -> None:
        index = int(m.group(1))
        mnemonic = _WIDE_FORMS.get(m.group(2), m.group(2))
        rest = m.group(3) or ""
        opcode, fused = split_fused_operand(mnemonic)
        if mnemonic in ("tableswitch", "lookupswitch"):
            opcode, fused = mnemonic, None
            if rest.startswith("{"):
                comment = rest[1:].split("//", 1)[1].strip() if "//" in rest else None
                self.switch = (index, opcode, comment, [])
                self.switch_default = None
                self.mode = "switch"
                return
        operands, comment = _parse_operands(rest, line_no, line)
        if fused is not None:
            operands.insert(0, fused)
        self.add_instruction(Instruction(index, opcode, tuple(operands), comment), line_no, line)

    def _feed_switch(self, line_no: int, line: str, stripped: str) -> None:
        assert self.switch is not None
        index, opcode, comment, targets = self.switch
        if stripped == "}":
            if self.switch_default is None:
                raise MalformedLine(line_no, line)
            # default target first; case targets follow in printed order
            ins = Instruction(index, opcode, (self.switch_default, *targets), comment)
            self.switch = None
            self.mode = "code"
            self.add_instruction(ins, line_no, line)
            return
        m = _SWITCH_CASE.match(line)
        if not m:
            raise MalformedLine(line_no, line)
        if m.group(1) == "default":
            self.switch_default = int(m.group(2))
        else:
            targets.append(int(m.group(2)))


def parse_disassembly(text: str) -> list[MethodDisassembly]:
    """Parse disassembler output into one :class:`MethodDisassembly` per method body.

    Abstract and native methods (no ``Code:`` section by definition) are
    skipped; any other method without code raises :class:`MissingCode`.
    """
    parser = _Parser()
    for line_no, line in enumerate(text.splitlines(), start=1):
        parser.feed(line_no, line)
    if parser.mode == "switch":
        raise MalformedLine(len(text.splitlines()), "unterminated switch block")
    parser.finish_method()
    return parser.methods


def resolve_variable(md: MethodDisassembly, slot: int, at_index: int) -> LocalVariableEntry:
    """Return the table entry for ``slot`` whose scope covers ``at_index``.

    When scopes overlap, the innermost (greatest start) wins.
    """
    if slot < 0:
        raise ValueError(f"slot must be non-negative, got {slot}")
    best = None
    for entry in md.variable_table:
        if entry.slot == slot and entry.covers(at_index):
            if best is None or entry.start > best.start:
                best = entry
    if best is None:
        raise UnknownSlot(slot, at_index)
    return best
