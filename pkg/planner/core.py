"""Domain types shared by every stage: variables, conditions, designs, plans and units.

Conditions are stored as mixed-radix integers over a ``VariableSet``. The first
variable is the most significant digit, so codes follow the order of
``itertools.product`` over the level lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidLevel, ProjectionError, VariableOverlap

ConditionCode = int
VarRef = Tuple[str, ...]


LEVEL_SEPARATOR = "-"


def check_level(level: str, variable: str, compound: bool = False) -> str:
    """``level`` unchanged if it renders into a plan-table cell and reads back as itself."""
    if not level or level != level.strip() or not level.isprintable():
        raise InvalidLevel(f"level {level!r} of '{variable}' must be printable text without surrounding spaces")
    if not compound and LEVEL_SEPARATOR in level:
        raise InvalidLevel(
            f"level {level!r} of '{variable}' contains '{LEVEL_SEPARATOR}', which joins the levels of a condition"
        )
    return level


@dataclass(frozen=True)
class Variable:
    """A manipulated factor with its ordered levels."""

    name: str
    levels: Tuple[str, ...]
    # flattened multifact levels carry the separator between component levels
    compound: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        levels = tuple(check_level(str(level), self.name, self.compound) for level in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise InvalidLevel(f"variable '{self.name}' needs at least one level")
        if len(set(levels)) != len(levels):
            raise InvalidLevel(f"variable '{self.name}' repeats a level name")

    @property
    def size(self) -> int:
        return len(self.levels)

    def index(self, level: str) -> int:
        try:
            return self.levels.index(str(level))
        except ValueError:
            raise InvalidLevel(f"'{level}' is not a level of '{self.name}'") from None


@dataclass(frozen=True)
class CompoundVariable:
    """Several variables treated as one factor (``multifact``)."""

    components: Tuple[Variable, ...]

    def __post_init__(self):
        components = tuple(self.components)
        object.__setattr__(self, "components", components)
        if len(components) < 2:
            raise InvalidLevel("a compound variable needs at least two components")
        names = [v.name for v in components]
        if len(set(names)) != len(names):
            raise VariableOverlap(f"compound variable repeats a component: {names}")

    @property
    def name(self) -> str:
        return "-".join(v.name for v in self.components)

    @property
    def size(self) -> int:
        return math.prod(v.size for v in self.components)

    def variable_set(self) -> "VariableSet":
        return VariableSet(self.components)

    def flatten(self) -> Variable:
        """Synthetic variable whose levels are the component levels joined with '-'."""
        vs = self.variable_set()
        return Variable(self.name, tuple(vs.render(code) for code in range(vs.size)), compound=True)


@dataclass(frozen=True)
class VariableSet:
    """Ordered, name-unique collection of variables governing condition codes."""

    variables: Tuple[Variable, ...] = ()

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise VariableOverlap(f"duplicate variable names in {names}")

    def __len__(self) -> int:
        return len(self.variables)

    def __iter__(self) -> Iterator[Variable]:
        return iter(self.variables)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def radices(self) -> Tuple[int, ...]:
        return tuple(v.size for v in self.variables)

    @property
    def size(self) -> int:
        """Total number of distinct conditions."""
        return math.prod(self.radices)

    def get(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise ProjectionError(f"unknown variable '{name}'")

    def subset(self, names: Iterable[str]) -> "VariableSet":
        """Sub-set in the order given by ``names``."""
        return VariableSet(tuple(self.get(n) for n in names))

    def ordered_like(self, reference: "VariableSet") -> "VariableSet":
        """Same variables, sorted by their position in ``reference``."""
        order = {name: i for i, name in enumerate(reference.names)}
        return VariableSet(tuple(sorted(self.variables, key=lambda v: order.get(v.name, len(order)))))

    def union(self, other: "VariableSet") -> "VariableSet":
        overlap = set(self.names) & set(other.names)
        if overlap:
            raise VariableOverlap(f"variable sets overlap on {sorted(overlap)}")
        return VariableSet(self.variables + other.variables)

    def encode(self, levels: Sequence[str]) -> ConditionCode:
        if len(levels) != len(self.variables):
            raise InvalidLevel(f"expected {len(self.variables)} levels, got {len(levels)}")
        code = 0
        for variable, level in zip(self.variables, levels):
            code = code * variable.size + variable.index(level)
        return code

    def digits(self, code: ConditionCode) -> Tuple[int, ...]:
        if not 0 <= code < self.size:
            raise InvalidLevel(f"condition code {code} out of range for {self.names}")
        digits = []
        for radix in reversed(self.radices):
            code, digit = divmod(code, radix)
            digits.append(digit)
        return tuple(reversed(digits))

    def decode(self, code: ConditionCode) -> Tuple[str, ...]:
        return tuple(v.levels[d] for v, d in zip(self.variables, self.digits(code)))

    def render(self, code: ConditionCode, sep: str = "-") -> str:
        return sep.join(self.decode(code))

    def projection_table(self, onto: "VariableSet") -> np.ndarray:
        """Array mapping every code of this set to its code over ``onto``."""
        missing = [n for n in onto.names if n not in self]
        if missing:
            raise ProjectionError(f"{missing} not in {self.names}")
        if not onto.variables:
            return np.zeros(self.size, dtype=np.int64)
        if not self.variables:
            return np.zeros(1, dtype=np.int64)
        digits = np.unravel_index(np.arange(self.size, dtype=np.int64), self.radices)
        position = {name: i for i, name in enumerate(self.names)}
        picked = tuple(digits[position[n]] for n in onto.names)
        return np.ravel_multi_index(picked, onto.radices).astype(np.int64)


def encode_condition(levels: Sequence[str], vs: VariableSet) -> ConditionCode:
    return vs.encode(levels)


def decode_condition(code: ConditionCode, vs: VariableSet) -> Tuple[str, ...]:
    return vs.decode(code)


def project(code: ConditionCode, source: VariableSet, onto: VariableSet) -> ConditionCode:
    """Restrict a condition to the variables of ``onto`` (in ``onto``'s order)."""
    missing = [n for n in onto.names if n not in source]
    if missing:
        raise ProjectionError(f"cannot project onto {missing}: not in {source.names}")
    digits = dict(zip(source.names, source.digits(code)))
    result = 0
    for variable in onto.variables:
        result = result * variable.size + digits[variable.name]
    return result


def combine(a: ConditionCode, vs_a: VariableSet, b: ConditionCode, vs_b: VariableSet) -> ConditionCode:
    """Code over ``vs_a.union(vs_b)`` whose levels are a's followed by b's."""
    vs_a.union(vs_b)
    vs_a.digits(a)
    vs_b.digits(b)
    return a * vs_b.size + b


def ref_name(ref: VarRef) -> str:
    return "-".join(ref)


# -- design AST -------------------------------------------------------------

VariableLike = Union[str, Variable, CompoundVariable, Sequence[str]]


def as_ref(variable: VariableLike) -> VarRef:
    if isinstance(variable, str):
        return (variable,)
    if isinstance(variable, Variable):
        return (variable.name,)
    if isinstance(variable, CompoundVariable):
        return tuple(v.name for v in variable.components)
    return tuple(v.name if isinstance(v, Variable) else str(v) for v in variable)


class _Fluent:
    """Chainable design methods, mirroring the fluent Python interface."""

    def counterbalance(self, variable: VariableLike) -> "Counterbalance":
        return Counterbalance(self, as_ref(variable))

    def within_subjects(self, variable: VariableLike) -> "WithinSubjects":
        return WithinSubjects(self, as_ref(variable))

    def between_subjects(self, variable: VariableLike) -> "BetweenSubjects":
        return BetweenSubjects(self, as_ref(variable))

    def limit_plans(self, count: int) -> "LimitPlans":
        return LimitPlans(self, int(count))

    def num_trials(self, count: int) -> "NumTrials":
        return NumTrials(self, int(count))

    def start_with(self, variable: VariableLike, level: str) -> "StartWith":
        return StartWith(self, as_ref(variable), str(level))

    def multifact(self, *variables: VariableLike) -> "Multifact":
        return Multifact(self, tuple(name for v in variables for name in as_ref(v)))


@dataclass(frozen=True)
class Design(_Fluent):
    """The empty design every chain starts from."""


@dataclass(frozen=True)
class Cross(_Fluent):
    left: "DesignAst"
    right: "DesignAst"


@dataclass(frozen=True)
class Nest(_Fluent):
    inner: "DesignAst"
    outer: "DesignAst"


@dataclass(frozen=True)
class Counterbalance(_Fluent):
    base: "DesignAst"
    variable: VarRef


@dataclass(frozen=True)
class WithinSubjects(_Fluent):
    base: "DesignAst"
    variable: VarRef


@dataclass(frozen=True)
class BetweenSubjects(_Fluent):
    base: "DesignAst"
    variable: VarRef


@dataclass(frozen=True)
class LimitPlans(_Fluent):
    base: "DesignAst"
    count: int


@dataclass(frozen=True)
class NumTrials(_Fluent):
    base: "DesignAst"
    count: int


@dataclass(frozen=True)
class StartWith(_Fluent):
    base: "DesignAst"
    variable: VarRef
    level: str


@dataclass(frozen=True)
class Multifact(_Fluent):
    base: "DesignAst"
    components: VarRef


DesignAst = Union[
    Design, Cross, Nest, Counterbalance, WithinSubjects, BetweenSubjects,
    LimitPlans, NumTrials, StartWith, Multifact,
]
MethodNode = Union[
    Counterbalance, WithinSubjects, BetweenSubjects, LimitPlans, NumTrials, StartWith, Multifact,
]
METHOD_TYPES = (Counterbalance, WithinSubjects, BetweenSubjects, LimitPlans, NumTrials, StartWith, Multifact)


def cross(left: DesignAst, right: DesignAst) -> Cross:
    return Cross(left, right)


def nest(inner: DesignAst, outer: DesignAst) -> Nest:
    return Nest(inner, outer)


def unchain(node: DesignAst) -> Tuple[DesignAst, List[MethodNode]]:
    """Split a node into its base (Design, Cross or Nest) and methods in call order."""
    methods: List[MethodNode] = []
    while isinstance(node, METHOD_TYPES):
        methods.append(node)
        node = node.base
    methods.reverse()
    return node, methods


def referenced_variables(node: DesignAst) -> List[str]:
    """Variable names a design mentions, first mention first."""
    seen: Dict[str, None] = {}
    base, methods = unchain(node)
    if isinstance(base, Cross):
        children = [base.left, base.right]
    elif isinstance(base, Nest):
        children = [base.inner, base.outer]
    else:
        children = []
    for child in children:
        for name in referenced_variables(child):
            seen.setdefault(name)
    for method in methods:
        ref = getattr(method, "variable", None) or getattr(method, "components", None) or ()
        for name in ref:
            seen.setdefault(name)
    return list(seen)


# -- plan matrices ------------------------------------------------------------

def cells_valid(cells: np.ndarray, vs: VariableSet) -> bool:
    """True when every cell decodes to a level tuple of ``vs``."""
    cells = np.asarray(cells)
    return bool(cells.size == 0 or (cells.min() >= 0 and cells.max() < vs.size))


@dataclass(frozen=True, eq=False)
class PlanMatrix:
    """Rows are experimental plans, columns are trials, cells are condition codes."""

    cells: np.ndarray
    variable_set: VariableSet

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64, copy=True)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise InvalidLevel(f"plan matrix must be a non-empty 2-D array, got shape {cells.shape}")
        if not cells_valid(cells, self.variable_set):
            raise InvalidLevel(f"plan matrix holds codes outside 0..{self.variable_set.size - 1}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def plans(self) -> int:
        return int(self.cells.shape[0])

    @property
    def trials(self) -> int:
        return int(self.cells.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.plans, self.trials

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlanMatrix):
            return NotImplemented
        return self.variable_set == other.variable_set and np.array_equal(self.cells, other.cells)

    def __hash__(self) -> int:
        return hash((self.variable_set, self.key()))

    def key(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(c) for c in row) for row in self.cells)

    def project(self, onto: Union[VariableSet, Sequence[str]]) -> np.ndarray:
        """Cell codes restricted to ``onto``."""
        if not isinstance(onto, VariableSet):
            onto = self.variable_set.subset(onto)
        return self.variable_set.projection_table(onto)[self.cells]

    def reorder(self, reference: VariableSet) -> "PlanMatrix":
        """Same conditions, with variables in ``reference`` order."""
        target = self.variable_set.ordered_like(reference)
        if target.names == self.variable_set.names:
            return self
        return PlanMatrix(self.project(target), target)

    def render_rows(self, sep: str = "-") -> List[List[str]]:
        names = [self.variable_set.render(code, sep) for code in range(self.variable_set.size)]
        return [[names[int(c)] for c in row] for row in self.cells]


# -- units and assignments ------------------------------------------------------

@dataclass(frozen=True)
class UnitRow:
    unit_id: int
    members: Tuple[int, ...]


@dataclass(frozen=True)
class UnitTable:
    rows: Tuple[UnitRow, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if [r.unit_id for r in rows] != list(range(1, len(rows) + 1)):
            raise ValueError("unit ids must be consecutive from 1")
        if len({len(r.members) for r in rows}) > 1:
            raise ValueError("clusters must all have the same number of members")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def clustered(self) -> bool:
        return bool(self.rows) and len(self.rows[0].members) > 1


@dataclass(frozen=True)
class AssignmentRow:
    unit_id: int
    members: Tuple[int, ...]
    plan_id: int


@dataclass(frozen=True)
class AssignmentWarning:
    code: str
    message: str


@dataclass(frozen=True)
class AssignmentTable:
    rows: Tuple[AssignmentRow, ...]
    plan_count: int
    warnings: Tuple[AssignmentWarning, ...] = field(default=())

    def plan_counts(self) -> Dict[int, int]:
        counts = {plan: 0 for plan in range(self.plan_count)}
        for row in self.rows:
            counts[row.plan_id] += 1
        return counts
