"""Shared fixtures: example programs, small designs and a CLI runner."""

from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from planner.constraints import resolve
from planner.core import Design, PlanMatrix, Variable, VariableSet
from planner.parser import parse

ROOT = Path(__file__).resolve().parent.parent
PROGRAMS = ROOT / "programs"
CORPUS = PROGRAMS / "corpus"


def load(name: str):
    path = PROGRAMS / name if (PROGRAMS / name).exists() else CORPUS / name
    return parse(path.read_text(encoding="utf-8"))


def latin_design(levels: int, name: str = "v"):
    """Variable set and resolved Latin-square design of the given order."""
    vs = VariableSet((Variable(name, tuple(f"{name}{i}" for i in range(levels))),))
    return vs, resolve(Design().counterbalance(name).limit_plans(levels), vs)


def matrix(rows, vs: VariableSet) -> PlanMatrix:
    return PlanMatrix(np.array(rows, dtype=np.int64), vs)


@pytest.fixture
def programs_dir() -> Path:
    return PROGRAMS


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture
def ffl():
    return load("ffl.pln")


@pytest.fixture
def ffl_vs(ffl) -> VariableSet:
    return ffl.variable_set


@pytest.fixture
def ffl_rd(ffl):
    return resolve(ffl.assigned_design, ffl.variable_set)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def no_config(tmp_path) -> list:
    """CLI arguments pointing at a config file that does not exist."""
    return ["--config", str(tmp_path / "missing.yaml")]
