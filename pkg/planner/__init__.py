"""Experimental-design planner: design language, constraint resolution, solver and assignment."""

from .assign import build_units, emit_plan_table, match
from .constraints import ResolvedDesign, resolve, shape_of_cross, shape_of_nest
from .core import (
    CompoundVariable,
    Design,
    PlanMatrix,
    Variable,
    VariableSet,
    combine,
    cross,
    decode_condition,
    encode_condition,
    nest,
    project,
)
from .parser import Program, parse, render
from .pipeline import Pipeline
from .solver import count, enumerate, solve, solve_cross, solve_nest_kron

__all__ = [
    "CompoundVariable", "Design", "PlanMatrix", "Variable", "VariableSet",
    "combine", "cross", "decode_condition", "encode_condition", "nest", "project",
    "Program", "parse", "render",
    "ResolvedDesign", "resolve", "shape_of_cross", "shape_of_nest",
    "count", "enumerate", "solve", "solve_cross", "solve_nest_kron",
    "build_units", "emit_plan_table", "match",
    "Pipeline",
]
