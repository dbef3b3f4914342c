import itertools
import json

import numpy as np
import pytest

from conftest import latin_design, matrix
from planner import solver
from planner.constraints import resolve
from planner.core import Design, Variable, VariableSet, cross
from planner.errors import DivisibilityError, ShapeMismatch
from planner.solver import count, solve
from tools.tables import read_plans
from tools.verify import (
    check_all,
    check_apa_balance,
    check_between,
    check_block_structure,
    check_counterbalance,
    check_fisher_latin_square,
    check_start_with,
    check_within,
    classify,
    report,
)

FFL_TABLE = (
    "plan_id,trial_1,trial_2,trial_3,trial_4\n"
    "0,ffl-1-creation,latex-2-creation,ffl-1-editing,latex-2-editing\n"
    "1,ffl-2-creation,latex-1-creation,ffl-2-editing,latex-1-editing\n"
    "2,latex-1-creation,ffl-2-creation,latex-1-editing,ffl-2-editing\n"
    "3,latex-2-creation,ffl-1-creation,latex-2-editing,ffl-1-editing\n"
)

SQUARE = [[0, 1, 2], [1, 2, 0], [2, 0, 1]]


@pytest.fixture
def v3():
    return VariableSet((Variable("v", ("a", "b", "c")),))


@pytest.fixture
def v2():
    return VariableSet((Variable("v", ("a", "b")),))


def test_fisher_latin_square(v3):
    assert check_fisher_latin_square(matrix(SQUARE, v3), "v").passed
    swapped = [[1, 1, 2], [0, 2, 0], [2, 0, 1]]
    result = check_fisher_latin_square(matrix(swapped, v3), "v")
    assert not result.passed
    assert result.first_violation == (0, 1)
    assert "row 0, col 1" in result.detail


def test_fisher_needs_a_square(v3):
    with pytest.raises(ShapeMismatch):
        check_fisher_latin_square(matrix([[0, 1, 2], [1, 2, 0]], v3), "v")


def test_apa_balance_is_weaker_than_fisher(v3):
    columns_only = matrix([[0, 0, 0], [1, 1, 1], [2, 2, 2]], v3)
    assert check_apa_balance(columns_only, "v").passed
    assert not check_fisher_latin_square(columns_only, "v").passed


def test_apa_balance_reports_the_extra_occurrence(v2):
    result = check_apa_balance(matrix([[0, 1], [0, 1], [1, 0], [0, 0]], v2), "v")
    assert not result.passed
    assert result.first_violation == (3, 0)


def test_apa_balance_needs_divisible_plans(v3):
    with pytest.raises(DivisibilityError):
        check_apa_balance(matrix([[0, 1, 2], [1, 2, 0]], v3), "v")


def test_counterbalance(v2):
    assert check_counterbalance(matrix([[0, 1], [1, 0]], v2), "v").passed
    repeated = check_counterbalance(matrix([[0, 1], [1, 0], [0, 1], [1, 0]], v2), "v")
    assert not repeated.passed
    assert repeated.first_violation == (2, 0)
    assert repeated.detail.startswith("plan repeated")
    unbalanced = check_counterbalance(matrix([[0, 0], [1, 1]], v2), "v")
    assert unbalanced.detail.startswith("row unbalanced")


def test_within_and_between(v2):
    assert check_within(matrix([[0, 1], [1, 0]], v2), "v").passed
    assert check_within(matrix([[0, 0], [0, 1]], v2), "v").first_violation == (0, 0)
    assert check_between(matrix([[0, 0], [1, 1]], v2), "v").passed
    assert check_between(matrix([[0, 0], [1, 0]], v2), "v").first_violation == (1, 1)


def test_start_with(v3):
    assert check_start_with(matrix([[0, 1, 2], [0, 2, 1]], v3), "v", "a").passed
    result = check_start_with(matrix(SQUARE, v3), "v", "a")
    assert result.first_violation == (1, 0)


def test_ffl_table_passes_every_check(ffl_vs, ffl_rd):
    plans = read_plans(FFL_TABLE, ffl_vs)
    results = check_all(plans, ffl_rd)
    assert [r.name for r in results][0] == "shape"
    assert results[-1].name == "block_structure"
    assert all(r.passed for r in results), [r.detail for r in results if not r.passed]


def test_block_structure_catches_a_moved_cell(ffl_vs, ffl_rd):
    broken = FFL_TABLE.replace(
        "0,ffl-1-creation,latex-2-creation,ffl-1-editing,latex-2-editing",
        "0,ffl-1-creation,latex-2-editing,ffl-1-editing,latex-2-creation",
    )
    plans = read_plans(broken, ffl_vs).reorder(ffl_rd.variable_set)
    result = check_block_structure(plans, ffl_rd.block_tree)
    assert not result.passed
    assert result.first_violation == (0, 1)
    assert result.variable == "tasktype"


def test_check_all_reports_shape_mismatch(ffl_vs, ffl_rd):
    plans = read_plans("\n".join(FFL_TABLE.splitlines()[:3]) + "\n", ffl_vs)
    results = check_all(plans, ffl_rd)
    assert len(results) == 1
    assert results[0].name == "shape"
    assert not results[0].passed


def test_check_all_names_the_broken_family():
    vs, rd = latin_design(3)
    results = check_all(matrix([[0, 1, 2], [0, 2, 1], [2, 0, 1]], vs), rd)
    failed = [r for r in results if not r.passed]
    assert [r.name for r in failed] == ["column_balance"]
    assert failed[0].first_violation == (0, 0)


def test_classify_latin_square(v3):
    summary = classify(matrix(SQUARE, v3))
    assert summary["shape"] == [3, 3]
    assert summary["variables"]["v"]["labels"] == ["counterbalanced", "latin-square"]
    assert summary["variables"]["v"]["assignment"] == "within"
    assert summary["blocks"] == []


def test_classify_between(v2):
    summary = classify(matrix([[0], [1]], v2))
    assert summary["variables"]["v"]["assignment"] == "between"


def test_classify_recovers_ffl_structure(ffl_vs):
    summary = classify(read_plans(FFL_TABLE, ffl_vs))
    variables = summary["variables"]
    assert set(variables) == {"interface", "tasknum", "tasktype", "interface-tasknum-tasktype"}
    assert "counterbalanced" in variables["interface"]["labels"]
    assert "starts-with:creation" in variables["tasktype"]["labels"]
    assert {"variables": ["tasktype"], "block_shape": [4, 2], "grid": [1, 2]} in summary["blocks"]
    # plans pair up on interface, the crossed factor that varies slowest
    assert {"variables": ["interface"], "block_shape": [2, 1], "grid": [2, 4]} in summary["blocks"]


def test_report_json(ffl_vs, ffl_rd):
    result = report(read_plans(FFL_TABLE, ffl_vs), ffl_rd, ffl_vs)
    assert result.passed
    payload = json.loads(result.to_json())
    assert set(payload) == {"checks", "classification"}
    first = payload["checks"][0]
    assert set(first) == {"name", "variable", "pass", "detail", "first_violation"}
    assert first["first_violation"] is None


def test_fisher_implies_apa_balance(v3):
    orders = list(itertools.permutations(range(3)))
    fisher = 0
    for rows in itertools.product(orders, repeat=3):
        plans = matrix(rows, v3)
        if check_fisher_latin_square(plans, "v").passed:
            fisher += 1
            assert check_apa_balance(plans, "v").passed
    _, rd = latin_design(3)
    assert fisher == count(rd) == 12
    assert all(check_apa_balance(m, "v").passed for m in solver.enumerate(rd))


def test_ffl_rows_never_show_every_task_interface_pair(ffl_vs, ffl_rd):
    pairs = ("tasknum", "interface")
    for plans in (read_plans(FFL_TABLE, ffl_vs), solve(ffl_rd, seed=42)):
        for row in plans.project(pairs).tolist():
            assert len(set(row)) == 2


def test_check_all_rejects_a_matrix_that_is_not_a_cross():
    vs = VariableSet((Variable("a", ("0", "1", "2")), Variable("b", ("0", "1", "2"))))
    rd = resolve(cross(
        Design().counterbalance("a").limit_plans(3),
        Design().counterbalance("b").limit_plans(3),
    ), vs)
    a_rows = np.array([
        [1, 0, 2], [0, 2, 1], [0, 1, 2], [2, 1, 0], [0, 2, 1],
        [1, 0, 2], [1, 2, 0], [2, 1, 0], [2, 0, 1],
    ])
    square = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]])
    b_rows = square[[0, 1, 2, 0, 2, 1, 1, 2, 0]]
    failed = [r for r in check_all(matrix(a_rows * 3 + b_rows, vs), rd) if not r.passed]
    assert [(r.name, r.variable) for r in failed] == [("cross_replication", "a")]
    assert failed[0].first_violation == (0, 0)
    assert all(r.passed for r in check_all(solve(rd, seed=3), rd))
