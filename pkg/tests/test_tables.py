import pytest

from conftest import matrix
from planner.assign import build_units, match
from planner.core import Variable, VariableSet
from planner.errors import InvalidLevel
from planner.parser import Clusters, Units
from tools.tables import (
    assignment_frame,
    plans_frame,
    read_plans,
    to_csv_text,
    write_csv,
)

FFL_TABLE = (
    "plan_id,trial_1,trial_2,trial_3,trial_4\n"
    "0,ffl-1-creation,latex-2-creation,ffl-1-editing,latex-2-editing\n"
    "1,ffl-2-creation,latex-1-creation,ffl-2-editing,latex-1-editing\n"
    "2,latex-1-creation,ffl-2-creation,latex-1-editing,ffl-2-editing\n"
    "3,latex-2-creation,ffl-1-creation,latex-2-editing,ffl-1-editing\n"
)


def test_plans_round_trip_through_csv_text(ffl_vs):
    plans = read_plans(FFL_TABLE, ffl_vs)
    assert plans.shape == (4, 4)
    assert plans.cells[0, 1] == ffl_vs.encode(("latex", "2", "creation"))
    assert to_csv_text(plans_frame(plans)) == FFL_TABLE


def test_plans_frame_columns(ffl_vs):
    frame = plans_frame(matrix([[0, 7]], ffl_vs))
    assert list(frame.columns) == ["plan_id", "trial_1", "trial_2"]
    assert frame.iloc[0].tolist() == ["0", "ffl-1-creation", "latex-2-editing"]


def test_plan_id_column_is_optional(ffl_vs):
    body = "\n".join(line.split(",", 1)[1] for line in FFL_TABLE.splitlines()) + "\n"
    assert read_plans(body, ffl_vs) == read_plans(FFL_TABLE, ffl_vs)


def test_warning_lines_are_comments(ffl_vs, tmp_path):
    path = write_csv(plans_frame(read_plans(FFL_TABLE, ffl_vs)), tmp_path / "out" / "plans.csv",
                     warnings=["uneven"])
    text = path.read_text(encoding="utf-8")
    assert text.startswith("# warning: uneven\nplan_id,")
    assert "\r" not in text
    assert read_plans(path, ffl_vs).shape == (4, 4)


def test_unknown_condition_is_rejected(ffl_vs):
    with pytest.raises(InvalidLevel):
        read_plans(FFL_TABLE.replace("latex-2-editing", "vim-2-editing"), ffl_vs)


def test_empty_table_is_rejected(ffl_vs):
    with pytest.raises(InvalidLevel):
        read_plans("plan_id\n0\n", ffl_vs)


def test_assignment_frame(ffl_vs):
    plans = read_plans(FFL_TABLE, ffl_vs)
    single = assignment_frame(match(build_units(Units(4)), plans, seed=1))
    assert list(single.columns) == ["unit_id", "members", "plan_id"]
    assert single["members"].tolist() == ["", "", "", ""]
    assert sorted(single["plan_id"].tolist()) == [0, 1, 2, 3]

    grouped = assignment_frame(match(build_units(Clusters(4, Units(2))), plans, seed=1))
    assert grouped["members"].tolist() == ["1;2", "3;4", "5;6", "7;8"]


def test_levels_may_contain_hash_signs(tmp_path):
    vs = VariableSet((Variable("v", ("c#1", "c#2")),))
    plans = matrix([[0, 1], [1, 0]], vs)
    text = to_csv_text(plans_frame(plans), ["two plans"])
    assert text.splitlines()[2] == "0,c#1,c#2"
    assert read_plans(text, vs) == plans
    path = write_csv(plans_frame(plans), tmp_path / "plans.csv")
    assert read_plans(path, vs) == plans
