from pathlib import Path

import pytest

from instrsearch.disasm import (
    ANONYMOUS_METHOD,
    Instruction,
    LocalVariableEntry,
    MalformedLine,
    MissingCode,
    UnknownSlot,
    parse_disassembly,
    resolve_variable,
    split_fused_operand,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def cal_array_sum():
    methods = parse_disassembly((FIXTURES / "cal_array_sum_for.javap").read_text())
    return {m.method_id: m for m in methods}["public int calArraySum(int[])"]


def test_fused_constant_and_store():
    (md,) = parse_disassembly("0: iconst_0\n1: istore_2\n")
    assert md.method_id == ANONYMOUS_METHOD
    assert md.instructions == [Instruction(0, "iconst", (0,)), Instruction(1, "istore", (2,))]


def test_empty_text_has_no_methods():
    assert parse_disassembly("") == []


def test_variable_table_row(cal_array_sum):
    assert LocalVariableEntry(2, 22, 2, "sum", "I") in cal_array_sum.variable_table


def test_fixture_shape(cal_array_sum):
    md = cal_array_sum
    assert [i.index for i in md.instructions] == [0, 1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 14, 15, 16, 19, 22, 23]
    assert (md.max_stack, md.max_locals) == (3, 4)
    assert md.instructions[7] == Instruction(7, "if_icmpge", (22,))
    assert md.instructions[14] == Instruction(16, "iinc", (3, 1))


def test_constructor_keeps_descriptor_comment():
    methods = parse_disassembly((FIXTURES / "cal_array_sum_for.javap").read_text())
    ctor = methods[0]
    assert ctor.method_id == "public CalArraySum()"
    assert ctor.instructions[1].descriptor_comment == 'Method java/lang/Object."<init>":()V'
    assert ctor.instructions[1].operands == (1,)


@pytest.mark.parametrize("slot,at,name", [(2, 4, "sum"), (3, 10, "i"), (1, 0, "array"), (0, 23, "this")])
def test_resolve_variable(cal_array_sum, slot, at, name):
    assert resolve_variable(cal_array_sum, slot, at).name == name


def test_resolve_absent_slot(cal_array_sum):
    with pytest.raises(UnknownSlot):
        resolve_variable(cal_array_sum, 9, 0)


def test_resolve_outside_scope(cal_array_sum):
    # sum's scope opens at 2, after the store at 1
    with pytest.raises(UnknownSlot):
        resolve_variable(cal_array_sum, 2, 1)


def test_resolve_prefers_innermost_scope():
    text = """\
  void f();
    Code:
       0: iconst_0
       1: istore_1
       2: iconst_1
       3: istore_1
       4: return
    LocalVariableTable:
      Start  Length  Slot  Name   Signature
          2       3     1 outer   I
          4       1     1 inner   I
"""
    (md,) = parse_disassembly(text)
    assert resolve_variable(md, 1, 4).name == "inner"
    assert resolve_variable(md, 1, 2).name == "outer"


@pytest.mark.parametrize("text,expected", [
    ("istore_2", ("istore", 2)),
    ("iconst_m1", ("iconst", -1)),
    ("goto", ("goto", None)),
    ("aload_0", ("aload", 0)),
    ("goto_w", ("goto_w", None)),
    ("invokevirtual", ("invokevirtual", None)),
])
def test_split_fused_operand(text, expected):
    assert split_fused_operand(text) == expected


def test_wide_local_forms_map_to_base():
    (md,) = parse_disassembly("0: iload_w 300\n4: iinc_w 300, 1000\n")
    assert md.instructions == [Instruction(0, "iload", (300,)), Instruction(4, "iinc", (300, 1000))]


def test_tableswitch_block():
    text = """\
  int pick(int);
    Code:
       0: iload_1
       1: tableswitch   { // 0 to 1
                     0: 24
                     1: 26
               default: 28
          }
      24: iconst_1
      25: ireturn
      26: iconst_2
      27: ireturn
      28: iconst_0
      29: ireturn
"""
    (md,) = parse_disassembly(text)
    sw = md.instructions[1]
    assert sw.opcode == "tableswitch"
    assert sw.operands == (28, 24, 26)
    assert [i.index for i in md.instructions] == [0, 1, 24, 25, 26, 27, 28, 29]


def test_lookupswitch_block():
    text = """\
  int pick(int);
    Code:
       0: iload_1
       1: lookupswitch  { // 2
                    10: 28
                   200: 30
               default: 32
          }
      28: iconst_1
      29: ireturn
      30: iconst_2
      31: ireturn
      32: iconst_0
      33: ireturn
"""
    (md,) = parse_disassembly(text)
    assert md.instructions[1].operands == (32, 28, 30)


def test_newarray_type_name():
    (md,) = parse_disassembly("0: iconst_5\n1: newarray       int\n3: areturn\n")
    assert md.instructions[1] == Instruction(1, "newarray", (10,))


def test_decreasing_index_is_malformed():
    with pytest.raises(MalformedLine) as err:
        parse_disassembly("0: iconst_0\n0: istore_1\n")
    assert err.value.line_no == 2


def test_garbage_operand_is_malformed():
    with pytest.raises(MalformedLine):
        parse_disassembly("0: bipush  lots\n")


def test_method_without_code():
    text = "public class A {\n  public void f();\n  public void g();\n    Code:\n       0: return\n}\n"
    with pytest.raises(MissingCode) as err:
        parse_disassembly(text)
    assert err.value.method_id == "public void f()"


def test_abstract_and_native_methods_are_skipped():
    text = """\
public abstract class A {
  public abstract void f();
  public native int g(int);
  public void h();
    Code:
       0: return
}
"""
    methods = parse_disassembly(text)
    assert [m.method_id for m in methods] == ["public void h()"]


def test_missing_variable_table_is_accepted():
    (md,) = parse_disassembly("  void f();\n    Code:\n       0: iconst_0\n       1: istore_1\n       2: return\n")
    assert md.variable_table == []
    assert md.max_stack is None


def test_static_initializer_header():
    (md,) = parse_disassembly("  static {};\n    Code:\n       0: return\n")
    assert md.method_id == "static {}"


def test_parse_is_pure():
    text = (FIXTURES / "cal_array_sum_for.javap").read_text()
    assert parse_disassembly(text) == parse_disassembly(text)
