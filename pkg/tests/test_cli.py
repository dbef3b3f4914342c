import json

import pytest

import cli as cli_module
from cli import cli
from planner.pipeline import TIMEOUT_ENV

FFL_TABLE = (
    "plan_id,trial_1,trial_2,trial_3,trial_4\n"
    "0,ffl-1-creation,latex-2-creation,ffl-1-editing,latex-2-editing\n"
    "1,ffl-2-creation,latex-1-creation,ffl-2-editing,latex-1-editing\n"
    "2,latex-1-creation,ffl-2-creation,latex-1-editing,ffl-2-editing\n"
    "3,latex-2-creation,ffl-1-creation,latex-2-editing,ffl-1-editing\n"
)


@pytest.fixture(autouse=True)
def no_timeout_env(monkeypatch):
    monkeypatch.delenv(TIMEOUT_ENV, raising=False)


@pytest.fixture
def invoke(runner, no_config):
    def run(*args):
        return runner.invoke(cli, no_config + [str(a) for a in args])
    return run


def test_solve_prints_plan_table(invoke, programs_dir):
    result = invoke("solve", programs_dir / "ffl.pln", "--seed", 42)
    assert result.exit_code == 0, result.output
    lines = result.stdout.splitlines()
    assert lines[0] == "plan_id,trial_1,trial_2,trial_3,trial_4"
    assert len(lines) == 5
    assert all(line.split(",")[1].endswith("creation") for line in lines[1:])


def test_solve_is_reproducible(invoke, programs_dir):
    first = invoke("solve", programs_dir / "latin5.pln", "--seed", 9).stdout
    assert invoke("solve", programs_dir / "latin5.pln", "--seed", 9).stdout == first


def test_solve_then_verify(invoke, programs_dir, tmp_path):
    plans = tmp_path / "plans.csv"
    assert invoke("solve", programs_dir / "ffl.pln", "--out", plans).exit_code == 0
    result = invoke("verify", plans, programs_dir / "ffl.pln")
    assert result.exit_code == 0, result.output
    payload = json.loads(result.stdout)
    assert all(check["pass"] for check in payload["checks"])


def test_verify_published_ffl_table(invoke, programs_dir, tmp_path):
    plans = tmp_path / "table1.csv"
    plans.write_text(FFL_TABLE, encoding="utf-8")
    out = tmp_path / "report.json"
    result = invoke("verify", plans, programs_dir / "ffl.pln", "--out", out)
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["classification"]["shape"] == [4, 4]


def test_verify_failure_exits_6(invoke, programs_dir, tmp_path):
    plans = tmp_path / "broken.csv"
    plans.write_text(FFL_TABLE.replace("1,ffl-2-creation", "1,ffl-1-creation"), encoding="utf-8")
    result = invoke("verify", plans, programs_dir / "ffl.pln")
    assert result.exit_code == 6
    assert "failed" in result.stderr
    assert any(not check["pass"] for check in json.loads(result.stdout)["checks"])


def test_verify_unknown_condition_exits_6(invoke, programs_dir, tmp_path):
    plans = tmp_path / "bad.csv"
    plans.write_text(FFL_TABLE.replace("latex-2-editing", "vim-2-editing"), encoding="utf-8")
    result = invoke("verify", plans, programs_dir / "ffl.pln")
    assert result.exit_code == 6
    assert "C001" in result.stderr


def test_assign_writes_both_tables(invoke, programs_dir, tmp_path):
    out = tmp_path / "run" / "assignment.csv"
    result = invoke("assign", programs_dir / "ffl.pln", "--out", out)
    assert result.exit_code == 0, result.output
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "unit_id,members,plan_id"
    assert len(lines) == 29
    assert (tmp_path / "run" / "plans.csv").read_text(encoding="utf-8").startswith("plan_id,")


def test_assign_uses_the_directive_seed(invoke, programs_dir):
    implicit = invoke("assign", programs_dir / "ffl.pln").stdout
    explicit = invoke("assign", programs_dir / "ffl.pln", "--seed", 42).stdout
    assert implicit == explicit


def test_assign_needs_a_seed(invoke, tmp_path):
    spec = tmp_path / "noseed.pln"
    spec.write_text(
        "variable v { a b }\ndesign d = design().counterbalance(v)\nunits p = units(4)\nassign p to d\n",
        encoding="utf-8",
    )
    result = invoke("assign", spec)
    assert result.exit_code == 2
    assert "--seed" in result.output


def test_assign_clusters(invoke, programs_dir):
    result = invoke("assign", programs_dir / "groups.pln")
    assert result.exit_code == 0, result.output
    rows = result.stdout.splitlines()[1:]
    assert rows[0].startswith("1,1;2;3,")
    assert len(rows) == 6


def test_uneven_partition_exit_code_and_override(invoke, corpus_dir):
    strict = invoke("assign", corpus_dir / "andalibi.pln")
    assert strict.exit_code == 5
    assert "A001" in strict.stderr
    relaxed = invoke("assign", corpus_dir / "andalibi.pln", "--policy", "allow-uneven")
    assert relaxed.exit_code == 0
    assert relaxed.stdout.startswith("# warning: ")
    assert "warning:" in relaxed.stderr


def test_parse_error_exit_code(invoke, tmp_path):
    spec = tmp_path / "bad.pln"
    spec.write_text("variable v { a b\n", encoding="utf-8")
    result = invoke("solve", spec)
    assert result.exit_code == 1
    assert "P001" in result.stderr


def test_resolve_error_exit_code(invoke, corpus_dir):
    result = invoke("solve", corpus_dir / "desai_chin.pln")
    assert result.exit_code == 2
    assert "R004" in result.stderr


@pytest.mark.parametrize("name, expected", [("latin3.pln", "12"), ("latin1.pln", "1"), ("nested_2x2.pln", "32")])
def test_enumerate_count_only(invoke, programs_dir, name, expected):
    result = invoke("enumerate", programs_dir / name, "--count-only")
    assert result.exit_code == 0, result.output
    assert result.stdout.strip() == expected


def test_enumerate_lists_matrices(invoke, programs_dir):
    result = invoke("enumerate", programs_dir / "latin3.pln")
    assert result.exit_code == 0, result.output
    lines = result.stdout.splitlines()
    assert lines[0] == "matrix,plan_id,trial_1,trial_2,trial_3"
    assert len(lines) == 1 + 12 * 3
    assert lines[1] == "0,0,a,b,c"


def test_enumerate_needs_a_limit_for_large_designs(invoke, programs_dir):
    result = invoke("enumerate", programs_dir / "latin10.pln")
    assert result.exit_code == 7
    limited = invoke("enumerate", programs_dir / "latin10.pln", "--limit", 1)
    assert limited.exit_code == 0
    assert len(limited.stdout.splitlines()) == 11


def test_timeout_env_overrides_flag(runner, no_config, programs_dir, monkeypatch):
    monkeypatch.setenv(TIMEOUT_ENV, "0")
    result = runner.invoke(cli, no_config + ["solve", str(programs_dir / "latin3.pln"), "--timeout", "0.000000001"])
    assert result.exit_code == 0, result.output


def test_enumerate_command_keeps_the_builtin():
    assert "enumerate" in cli.commands
    assert "enumerate" not in vars(cli_module)


def test_levels_with_hash_signs_verify(invoke, tmp_path):
    spec = tmp_path / "hash.pln"
    spec.write_text(
        'variable v { "c#1" "c#2" }  # quoted levels\n'
        "design d = design().counterbalance(v)\nunits p = units(2)\nassign p to d seed 1\n",
        encoding="utf-8",
    )
    plans = tmp_path / "plans.csv"
    assert invoke("solve", spec, "--out", plans).exit_code == 0
    assert "c#1" in plans.read_text(encoding="utf-8")
    result = invoke("verify", plans, spec)
    assert result.exit_code == 0, result.output
