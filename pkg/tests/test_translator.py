import json
import re

import pytest

from instrsearch.disasm import Instruction, LocalVariableEntry, MethodDisassembly, parse_disassembly
from instrsearch.ruleset import Category, TranslationRule, default_rules
from instrsearch.translator import (
    EMPTY_ARGS,
    GENERIC_VALUE,
    SimState,
    StackOverflowSim,
    SymbolicValue,
    constant_text,
    descriptor_arity,
    export_graph,
    pop_for,
    render_result,
    translate_method,
)

from oracles import (
    CAL_ARRAY_SUM_CONTROL_EDGES,
    CAL_ARRAY_SUM_DATA_EDGES,
    CAL_ARRAY_SUM_SENTENCES,
    CONSTRUCTOR_SENTENCES,
    FIXTURES,
    WHILE_RENAMING,
)

RS = default_rules()


def methods(name):
    return parse_disassembly((FIXTURES / name).read_text())


def listing1(instructions):
    return MethodDisassembly("m", instructions, [LocalVariableEntry(2, 22, 2, "sum", "I")])


def test_store_constant_pair():
    md = listing1([Instruction(0, "iconst", (0,)), Instruction(1, "istore", (2,))])
    t = translate_method(md, RS)
    assert [s for _, s in t.sentences] == ["push int constant 0 onto the operand stack",
                                          "store int 0 into local variable sum"]
    assert t.dependency_graph.data_edges == [(1, 0)]
    assert "1 -> 0;" in export_graph(t, "dot")


def test_empty_method():
    t = translate_method(MethodDisassembly("m"), RS)
    assert t.sentences == []
    assert t.dependency_graph.nodes == []
    assert export_graph(t, "dot").count(";") == 0
    assert json.loads(export_graph(t, "json"))["nodes"] == []


def test_branch_renders_target_and_control_edge():
    md = MethodDisassembly("m", [Instruction(0, "iload", (1,)), Instruction(1, "iload", (2,)),
                                 Instruction(2, "if_icmpge", (22,))])
    t = translate_method(md, RS)
    assert re.search(r"\b22\b", t.sentences[-1][1])
    assert (2, 22) in t.dependency_graph.control_edges
    assert 22 in t.dependency_graph.nodes


def test_cal_array_sum_transcript():
    (_, md) = methods("cal_array_sum_for.javap")
    t = translate_method(md, RS)
    assert t.sentences == CAL_ARRAY_SUM_SENTENCES
    assert t.dependency_graph.data_edges == CAL_ARRAY_SUM_DATA_EDGES
    assert t.dependency_graph.control_edges == CAL_ARRAY_SUM_CONTROL_EDGES
    assert t.final_stack_depth == 0


def test_constructor_transcript():
    ctor = methods("cal_array_sum_for.javap")[0]
    assert translate_method(ctor, RS).sentences == CONSTRUCTOR_SENTENCES


def test_graph_exports_mention_branch_target():
    (_, md) = methods("cal_array_sum_for.javap")
    t = translate_method(md, RS)
    dot = export_graph(t, "dot")
    assert "7 -> 22 [style=dashed];" in dot
    data = json.loads(export_graph(t, "json"))
    assert [7, 22] in data["control_edges"]
    with pytest.raises(ValueError):
        export_graph(t, "svg")


def test_while_and_for_loops_translate_alike():
    (_, for_md) = methods("cal_array_sum_for.javap")
    (_, while_md) = methods("cal_array_sum_while.javap")
    a = translate_method(for_md, RS)
    b = translate_method(while_md, RS)

    def rename(s):
        return re.sub(r"\b(\w+)\b", lambda m: WHILE_RENAMING.get(m.group(1), m.group(1)), s)

    assert [(i, rename(s)) for i, s in b.sentences] == a.sentences
    assert a.dependency_graph == b.dependency_graph


def test_pop_for_store_takes_constant():
    state = SimState([SymbolicValue("0", 0)])
    popped = pop_for(RS["istore"], Instruction(1, "istore", (2,)), state)
    assert [v.text for v in popped] == ["0"]
    assert state.stack == []


def test_pop_for_add_takes_both_operands():
    state = SimState([SymbolicValue("sum", 10), SymbolicValue("array[i]", 13)])
    popped = pop_for(RS["iadd"], Instruction(14, "iadd"), state)
    assert [v.text for v in popped] == ["array[i]", "sum"]
    assert render_result(RS["iadd"], popped, Instruction(14, "iadd")) == SymbolicValue(GENERIC_VALUE, 14)


def test_pop_for_underflow_sentinel():
    popped = pop_for(RS["istore"], Instruction(5, "istore", (2,)), SimState())
    assert popped == [SymbolicValue(GENERIC_VALUE, 5)]


def test_underflow_adds_no_data_edge():
    md = MethodDisassembly("m", [Instruction(0, "istore", (1,))])
    t = translate_method(md, RS)
    assert t.dependency_graph.data_edges == []
    assert t.sentences == [(0, "store int value into local variable var1")]


@pytest.mark.parametrize("opcode,index", [("iadd", 9), ("arraylength", 7)])
def test_render_result_is_generic_value(opcode, index):
    assert render_result(RS[opcode], [], Instruction(index, opcode)) == SymbolicValue("value", index)


def test_render_result_guards_category():
    with pytest.raises(ValueError):
        render_result(RS["iconst"], [], Instruction(2, "iconst", (0,)))


def test_pop_for_guards_non_popping_rules():
    with pytest.raises(ValueError):
        pop_for(RS["goto"], Instruction(0, "goto", (4,)), SimState())


@pytest.mark.parametrize("comment,expected", [
    ("Method java/util/Collections.swap:(Ljava/util/List;II)V", (3, False)),
    ('Method java/lang/Object."<init>":()V', (0, False)),
    ("Method java/lang/Math.max:(DD)D", (2, True)),
    ("InterfaceMethod java/util/List.get:(I)Ljava/lang/Object;", (1, True)),
    ("Method foo:([[ILjava/lang/String;J)[I", (3, True)),
    (None, None),
    ("String hello", None),
])
def test_descriptor_arity(comment, expected):
    assert descriptor_arity(comment) == expected


def test_static_call_pops_arguments_only():
    md = MethodDisassembly("m", [
        Instruction(0, "iconst", (1,)),
        Instruction(1, "iconst", (2,)),
        Instruction(2, "invokestatic", (7,), "Method java/lang/Math.max:(II)I"),
        Instruction(5, "ireturn"),
    ])
    t = translate_method(md, RS)
    assert t.sentences[2][1] == "invoke static method Math.max with 2, 1"
    assert t.sentences[3][1] == "return int value from method"
    assert t.final_stack_depth == 0


def test_zero_argument_static_call():
    md = MethodDisassembly("m", [Instruction(0, "invokestatic", (2,), "Method Util.now:()J")])
    t = translate_method(md, RS)
    assert t.sentences[0][1] == f"invoke static method Util.now with {EMPTY_ARGS}"
    assert t.final_stack_depth == 1


def test_call_without_descriptor_pops_nothing():
    md = MethodDisassembly("m", [Instruction(0, "invokevirtual", (2,))])
    t = translate_method(md, RS)
    assert t.final_stack_depth == 0


def test_iinc_renders_variable_and_increment():
    md = MethodDisassembly("m", [Instruction(0, "iinc", (3, -2))], [LocalVariableEntry(0, 3, 3, "i", "I")])
    assert translate_method(md, RS).sentences == [(0, "increment local variable i by constant -2")]


def test_dup_repushes_value():
    md = MethodDisassembly("m", [
        Instruction(0, "new", (2,), "class java/lang/StringBuilder"),
        Instruction(3, "dup"),
        Instruction(4, "invokespecial", (3,), 'Method java/lang/StringBuilder."<init>":()V'),
        Instruction(7, "areturn"),
    ])
    t = translate_method(md, RS)
    assert t.final_stack_depth == 0
    assert t.sentences[0][1] == "create new object of type StringBuilder"
    assert (7, 3) in t.dependency_graph.data_edges


@pytest.mark.parametrize("instr,text", [
    (Instruction(0, "ldc", (2,), "String hello world"), "hello world"),
    (Instruction(0, "ldc2_w", (2,), "double 3.5d"), "3.5"),
    (Instruction(0, "getfield", (2,), "Field count:I"), "count"),
    (Instruction(0, "getstatic", (2,), "Field java/lang/System.out:Ljava/io/PrintStream;"), "System.out"),
    (Instruction(0, "checkcast", (2,), "class java/lang/String"), "String"),
    (Instruction(0, "anewarray", (2,), 'class "[I"'), "int[]"),
    (Instruction(0, "newarray", (10,)), "int"),
    (Instruction(0, "bipush", (100,)), "100"),
])
def test_constant_text(instr, text):
    assert constant_text(instr) == text


def test_declared_max_stack_is_enforced():
    md = MethodDisassembly("m", [Instruction(0, "iconst", (0,)), Instruction(1, "iconst", (1,))], max_stack=1)
    with pytest.raises(StackOverflowSim) as err:
        translate_method(md, RS)
    assert err.value.index == 1


def test_text_stream_has_sentence_boundaries():
    md = listing1([Instruction(0, "iconst", (0,)), Instruction(1, "istore", (2,))])
    assert translate_method(md, RS).text() == (
        "push int constant 0 onto the operand stack . store int 0 into local variable sum ."
    )


def test_custom_rule_set_is_used():
    rs = RS.with_rule(TranslationRule("nop", Category.O, "idle here", 0, 0))
    t = translate_method(MethodDisassembly("m", [Instruction(0, "nop")]), rs)
    assert t.sentences == [(0, "idle here")]
