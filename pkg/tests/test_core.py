import numpy as np
import pytest

from planner.core import (
    CompoundVariable,
    Counterbalance,
    Cross,
    Design,
    LimitPlans,
    Nest,
    PlanMatrix,
    StartWith,
    UnitRow,
    UnitTable,
    Variable,
    VariableSet,
    combine,
    cross,
    decode_condition,
    encode_condition,
    nest,
    project,
    referenced_variables,
    unchain,
)
from planner.errors import InvalidLevel, ProjectionError, VariableOverlap


@pytest.fixture
def vs():
    return VariableSet((
        Variable("interface", ("ffl", "latex")),
        Variable("tasknum", ("1", "2")),
        Variable("tasktype", ("creation", "editing")),
    ))


def test_encode_is_mixed_radix_with_first_variable_most_significant(vs):
    assert encode_condition(("ffl", "1", "creation"), vs) == 0
    assert encode_condition(("ffl", "1", "editing"), vs) == 1
    assert encode_condition(("latex", "1", "editing"), vs) == 5
    assert decode_condition(5, vs) == ("latex", "1", "editing")


def test_decode_inverts_encode(vs):
    for code in range(vs.size):
        assert encode_condition(decode_condition(code, vs), vs) == code


def test_single_level_variable_has_one_code():
    vs = VariableSet((Variable("only", ("x",)),))
    assert encode_condition(("x",), vs) == 0
    assert vs.size == 1


def test_unknown_level_rejected(vs):
    with pytest.raises(InvalidLevel):
        encode_condition(("vim", "1", "creation"), vs)


def test_variable_rejects_repeated_levels():
    with pytest.raises(InvalidLevel):
        Variable("v", ("a", "a"))
    with pytest.raises(InvalidLevel):
        Variable("v", ())


def test_project_restricts_and_reorders(vs):
    onto = vs.subset(("tasktype", "interface"))
    # latex-1-editing -> (editing, latex)
    assert project(5, vs, onto) == 3
    assert project(5, vs, vs.subset(("tasknum",))) == 0


def test_project_onto_foreign_variable_fails(vs):
    other = VariableSet((Variable("speed", ("slow", "fast")),))
    with pytest.raises(ProjectionError):
        project(0, vs, other)


def test_projection_table_matches_project(vs):
    onto = vs.subset(("tasknum", "interface"))
    table = vs.projection_table(onto)
    assert table.tolist() == [project(code, vs, onto) for code in range(vs.size)]


def test_combine_concatenates_levels():
    a = VariableSet((Variable("p", ("X", "Y")),))
    b = VariableSet((Variable("q", ("A", "B", "C")),))
    code = combine(1, a, 2, b)
    assert code == 5
    assert a.union(b).decode(code) == ("Y", "C")


def test_combine_is_injective():
    a = VariableSet((Variable("p", ("X", "Y")),))
    b = VariableSet((Variable("q", ("A", "B", "C")),))
    codes = {combine(i, a, j, b) for i in range(a.size) for j in range(b.size)}
    assert codes == set(range(6))


def test_combine_rejects_overlap(vs):
    with pytest.raises(VariableOverlap):
        combine(0, vs, 0, vs.subset(("tasknum",)))


def test_compound_variable_flattens_levels():
    compound = CompoundVariable((Variable("a", ("x", "y")), Variable("b", ("1", "2"))))
    assert compound.name == "a-b"
    assert compound.size == 4
    assert compound.flatten().levels == ("x-1", "x-2", "y-1", "y-2")


@pytest.mark.parametrize("level", ["a-b", "two\nlines", " padded", "", "tab\there"])
def test_levels_a_plan_table_cannot_carry_are_rejected(level):
    with pytest.raises(InvalidLevel):
        Variable("v", ("ok", level))


def test_fluent_chain_builds_method_nodes():
    node = Design().counterbalance("v").start_with("v", "a").limit_plans(2)
    assert node == LimitPlans(StartWith(Counterbalance(Design(), ("v",)), ("v",), "a"), 2)
    base, methods = unchain(node)
    assert base == Design()
    assert [type(m).__name__ for m in methods] == ["Counterbalance", "StartWith", "LimitPlans"]


def test_multifact_argument_is_a_compound_reference():
    node = Design().counterbalance(("footstep", "posture"))
    assert node.variable == ("footstep", "posture")
    assert Design().multifact("a", "b").components == ("a", "b")


def test_cross_and_nest_helpers():
    a = Design().counterbalance("a")
    b = Design().counterbalance("b")
    assert cross(a, b) == Cross(a, b)
    assert nest(a, b) == Nest(a, b)
    assert referenced_variables(nest(a, b)) == ["a", "b"]


def test_plan_matrix_validates_codes(vs):
    with pytest.raises(InvalidLevel):
        PlanMatrix(np.array([[0, 8]]), vs)
    with pytest.raises(InvalidLevel):
        PlanMatrix(np.zeros((0, 2)), vs)


def test_plan_matrix_is_read_only(vs):
    m = PlanMatrix(np.array([[0, 1]]), vs)
    with pytest.raises(ValueError):
        m.cells[0, 0] = 3


def test_plan_matrix_reorder_keeps_conditions(vs):
    inner_first = vs.subset(("tasktype", "interface", "tasknum"))
    m = PlanMatrix(np.array([[inner_first.encode(("editing", "latex", "2"))]]), inner_first)
    reordered = m.reorder(vs)
    assert reordered.variable_set.names == vs.names
    assert reordered.render_rows() == [["latex-2-editing"]]


def test_unit_table_requires_consecutive_ids():
    with pytest.raises(ValueError):
        UnitTable((UnitRow(1, (1,)), UnitRow(3, (3,))))
    table = UnitTable((UnitRow(1, (1, 2)), UnitRow(2, (3, 4))))
    assert table.clustered
    assert len(table) == 2
