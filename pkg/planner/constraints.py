"""Resolve a design AST into a matrix shape plus scoped constraints over its cells.

Every constraint names the variables it reads (a projection of the cell code)
and a scope: the set of rows and columns it governs. ``cross`` lifts the
children's constraints onto the replicated rows and requires every child plan
to recur as a whole number of copies; ``nest`` maps the
inner constraints into every block and the outer constraints onto the block
grid.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    BetweenSubjects,
    Counterbalance,
    Cross,
    Design,
    DesignAst,
    LimitPlans,
    Multifact,
    Nest,
    NumTrials,
    StartWith,
    VarRef,
    VariableSet,
    WithinSubjects,
    ref_name,
    unchain,
)
from .errors import (
    CrossArityMismatch,
    DesignTooLarge,
    MissingTrialCount,
    PartialNestingUnsupported,
    ResolveError,
    ShapeMismatch,
    UnsatisfiableShape,
)

logger = logging.getLogger(__name__)

MAX_CELLS = 5_000_000


class ConstraintKind(str, Enum):
    ROW_BALANCE = "row_balance"
    COLUMN_BALANCE = "column_balance"
    FIXED_FIRST_COLUMN = "fixed_first_column"
    DISTINCT_ROWS = "distinct_rows"
    CONSTANT_IN_ROW = "constant_in_row"
    BLOCK_CONSTANT = "block_constant"
    CROSS_REPLICATION = "cross_replication"


ROW_LOCAL = (
    ConstraintKind.ROW_BALANCE,
    ConstraintKind.FIXED_FIRST_COLUMN,
    ConstraintKind.CONSTANT_IN_ROW,
)


@dataclass(frozen=True)
class Scope:
    """Cells at every (row, col) pair drawn from ``rows`` x ``cols``."""

    rows: Tuple[int, ...]
    cols: Tuple[int, ...]

    @classmethod
    def of(cls, rows: Iterable[int], cols: Iterable[int]) -> "Scope":
        return cls(tuple(rows), tuple(cols))

    @classmethod
    def full(cls, plans: int, trials: int) -> "Scope":
        return cls(tuple(range(plans)), tuple(range(trials)))

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.cols)

    def within(self, plans: int, trials: int) -> bool:
        return all(0 <= r < plans for r in self.rows) and all(0 <= c < trials for c in self.cols)

    def map(self, row: Callable[[int], Iterable[int]], col: Callable[[int], int]) -> "Scope":
        return Scope(tuple(r2 for r in self.rows for r2 in row(r)), tuple(col(c) for c in self.cols))

    def describe(self) -> str:
        def span(values: Tuple[int, ...]) -> str:
            if len(values) > 1 and values == tuple(range(values[0], values[-1] + 1)):
                return f"{values[0]}..{values[-1]}"
            if len(values) > 6:
                return f"{list(values[:3])}..{values[-1]} ({len(values)})"
            return str(list(values))
        return f"rows {span(self.rows)} x cols {span(self.cols)}"


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    variables: VarRef
    scope: Scope
    level: Optional[str] = None
    exact: bool = True
    # DISTINCT_ROWS: a projected row may occur up to ``repeat`` times;
    # CROSS_REPLICATION: every projected row occurs a multiple of ``repeat`` times
    repeat: int = 1

    def describe(self) -> str:
        text = f"{self.kind.value}({ref_name(self.variables)}"
        if self.level is not None:
            text += f"={self.level}"
        if self.repeat > 1:
            text += f", x{self.repeat}"
        return text + f") on {self.scope.describe()}"


@dataclass(frozen=True)
class BlockTree:
    """Row-group x column-group partition introduced by a nest."""

    shape: Tuple[int, int]
    grid: Tuple[int, int]
    block_shape: Tuple[int, int]
    outer_variables: VarRef
    inner: Optional["BlockTree"] = None
    outer: Optional["BlockTree"] = None

    def blocks(self) -> List[Scope]:
        bp, bt = self.block_shape
        return [
            Scope.of(range(br * bp, (br + 1) * bp), range(bc * bt, (bc + 1) * bt))
            for br in range(self.grid[0])
            for bc in range(self.grid[1])
        ]


@dataclass(frozen=True)
class ResolvedDesign:
    shape: Tuple[int, int]
    variable_set: VariableSet
    constraints: Tuple[Constraint, ...]
    block_tree: Optional[BlockTree] = None
    kind: str = "leaf"
    children: Tuple["ResolvedDesign", ...] = ()
    distinct: bool = False
    algebraic: bool = True
    declared: Tuple[Tuple[str, VarRef, Optional[str]], ...] = field(default=())

    @property
    def plans(self) -> int:
        return self.shape[0]

    @property
    def trials(self) -> int:
        return self.shape[1]

    @property
    def cells(self) -> int:
        return self.shape[0] * self.shape[1]


# -- row counting -------------------------------------------------------------------

class RowModel:
    """Counts rows (one scope row) that satisfy row-local constraints.

    Built over the codes of ``variable_set``; the count from a prefix is an
    upper bound whenever constraints outside the model also apply.
    """

    def __init__(self, variable_set: VariableSet, constraints: Sequence[Constraint], width: int):
        self.size = variable_set.size
        self.width = width
        self.balances: List[Tuple[List[int], int, int, int]] = []
        self.constants: List[List[int]] = []
        self.fixed: List[Tuple[List[int], int]] = []
        for constraint in constraints:
            table = [int(x) for x in variable_set.projection_table(variable_set.subset(constraint.variables))]
            sub = variable_set.subset(constraint.variables)
            if constraint.kind is ConstraintKind.ROW_BALANCE:
                lo, hi = balance_bounds(width, sub.size)
                self.balances.append((table, sub.size, lo, hi))
            elif constraint.kind is ConstraintKind.CONSTANT_IN_ROW:
                self.constants.append(table)
            elif constraint.kind is ConstraintKind.FIXED_FIRST_COLUMN:
                self.fixed.append((table, level_code(sub, constraint.level)))
        self._count = lru_cache(maxsize=None)(self._count_from)

    def _admits(self, pos: int, code: int, counts: Tuple[Tuple[int, ...], ...], consts: Tuple[int, ...]) -> bool:
        if pos == 0:
            for table, level in self.fixed:
                if table[code] != level:
                    return False
        for (table, _, _, hi), row in zip(self.balances, counts):
            if row[table[code]] >= hi:
                return False
        for table, level in zip(self.constants, consts):
            if level >= 0 and table[code] != level:
                return False
        return True

    def _advance(self, code: int, counts, consts):
        new_counts = []
        for (table, _, _, _), row in zip(self.balances, counts):
            level = table[code]
            new_counts.append(row[:level] + (row[level] + 1,) + row[level + 1:])
        new_consts = tuple(table[code] if level < 0 else level for table, level in zip(self.constants, consts))
        return tuple(new_counts), new_consts

    def _feasible(self, pos: int, counts) -> bool:
        remaining = self.width - pos
        for (_, _, lo, _), row in zip(self.balances, counts):
            if sum(max(0, lo - c) for c in row) > remaining:
                return False
        return True

    def _count_from(self, pos: int, counts, consts) -> int:
        if not self._feasible(pos, counts):
            return 0
        if pos == self.width:
            return 1
        total = 0
        for code in range(self.size):
            if self._admits(pos, code, counts, consts):
                total += self._count(pos + 1, *self._advance(code, counts, consts))
        return total

    def _state(self, prefix: Sequence[int]):
        counts = tuple((0,) * size for _, size, _, _ in self.balances)
        consts = tuple(-1 for _ in self.constants)
        for pos, code in enumerate(prefix):
            if not self._admits(pos, code, counts, consts):
                return None
            counts, consts = self._advance(code, counts, consts)
        return counts, consts

    def completions(self, prefix: Sequence[int] = ()) -> int:
        """Number of full rows extending ``prefix``."""
        state = self._state(prefix)
        if state is None:
            return 0
        return self._count(len(prefix), *state)

    def count(self) -> int:
        return self.completions(())


def level_code(sub: VariableSet, level: str) -> int:
    """Code of a level name over ``sub``; compound levels are '-'-joined."""
    if len(sub) == 1:
        return sub.variables[0].index(level)
    return sub.encode(tuple(level.split("-")))


def balance_bounds(width: int, levels: int) -> Tuple[int, int]:
    """Per-level occurrence bounds (floor, ceil) over ``width`` cells."""
    return width // levels, -(-width // levels)


# -- resolution -----------------------------------------------------------------------

@dataclass
class _Leaf:
    balanced: List[Tuple[str, VarRef]] = field(default_factory=list)
    starts: List[Tuple[VarRef, str]] = field(default_factory=list)
    limit: Optional[int] = None
    trials: Optional[int] = None
    declared: List[Tuple[str, VarRef, Optional[str]]] = field(default_factory=list)


def _level_count(ref: VarRef, vs: VariableSet) -> int:
    return vs.subset(ref).size


def _expand(ref: VarRef, fused: Dict[str, VarRef]) -> VarRef:
    names: List[str] = []
    for name in ref:
        for part in fused.get(name, (name,)):
            if part not in names:
                names.append(part)
    return tuple(names)


def _check_cells(plans: int, trials: int) -> None:
    if plans * trials > MAX_CELLS:
        raise DesignTooLarge(f"a {plans} x {trials} plan matrix exceeds {MAX_CELLS} cells")


def _resolve_leaf(methods, vs: VariableSet, default_plans: Optional[int]) -> ResolvedDesign:
    leaf = _Leaf()
    fused: Dict[str, VarRef] = {}
    for method in methods:
        if isinstance(method, Multifact):
            group = _expand(method.components, fused)
            for name in group:
                fused[name] = group
            leaf.declared.append(("multifact", group, None))
        elif isinstance(method, (Counterbalance, WithinSubjects, BetweenSubjects)):
            kind = {
                Counterbalance: "counterbalance",
                WithinSubjects: "within_subjects",
                BetweenSubjects: "between_subjects",
            }[type(method)]
            ref = _expand(method.variable, fused)
            leaf.balanced.append((kind, ref))
            leaf.declared.append((kind, ref, None))
        elif isinstance(method, StartWith):
            ref = _expand(method.variable, fused)
            leaf.starts.append((ref, method.level))
            leaf.declared.append(("start_with", ref, method.level))
        elif isinstance(method, LimitPlans):
            leaf.limit = method.count
        elif isinstance(method, NumTrials):
            leaf.trials = method.count

    used = {name for _, ref in leaf.balanced for name in ref} | {name for ref, _ in leaf.starts for name in ref}
    design_vs = VariableSet(tuple(v for v in vs if v.name in used))

    counterbalanced = [ref for kind, ref in leaf.balanced if kind == "counterbalance"]
    row_balanced = [ref for kind, ref in leaf.balanced if kind in ("counterbalance", "within_subjects")]
    between = [ref for kind, ref in leaf.balanced if kind == "between_subjects"]

    if not methods:
        return ResolvedDesign((1, 1), design_vs, (), distinct=True)

    # trials
    if leaf.trials is not None:
        trials = leaf.trials
    elif row_balanced:
        trials = math.lcm(*(_level_count(ref, vs) for ref in row_balanced))
    elif between:
        trials = 1
    else:
        raise MissingTrialCount("no method determines the number of trials; add num_trials or a balancing method")
    for ref in counterbalanced:
        n = _level_count(ref, vs)
        if trials % n:
            raise UnsatisfiableShape(
                f"counterbalancing '{ref_name(ref)}' ({n} levels) needs a multiple of {n} trials, got {trials}"
            )

    fixed_refs = {ref for ref, _ in leaf.starts}
    row_constraints: List[Tuple[ConstraintKind, VarRef, Optional[str], bool]] = []
    column_refs: List[VarRef] = []
    for kind, ref in leaf.balanced:
        n = _level_count(ref, vs)
        if kind == "counterbalance":
            row_constraints.append((ConstraintKind.ROW_BALANCE, ref, None, True))
            if ref not in fixed_refs:
                column_refs.append(ref)
        elif kind == "within_subjects":
            exact = trials % n == 0
            if not exact:
                logger.warning(
                    "within_subjects(%s): %d trials over %d levels; balancing rows as evenly as possible",
                    ref_name(ref), trials, n,
                )
            row_constraints.append((ConstraintKind.ROW_BALANCE, ref, None, exact))
        else:
            row_constraints.append((ConstraintKind.CONSTANT_IN_ROW, ref, None, True))
            column_refs.append(ref)
    for ref, level in leaf.starts:
        row_constraints.append((ConstraintKind.FIXED_FIRST_COLUMN, ref, level, True))

    distinct = bool(counterbalanced)
    one_row = Scope((0,), tuple(range(trials)))
    model = RowModel(
        design_vs,
        [Constraint(kind, ref, one_row, level, exact) for kind, ref, level, exact in row_constraints],
        trials,
    )

    # plans
    if leaf.limit is not None:
        plans = leaf.limit
        if distinct:
            feasible = model.count()
            if plans > feasible:
                raise UnsatisfiableShape(f"limit_plans({plans}) exceeds the {feasible} distinct feasible plans")
    elif counterbalanced:
        plans = model.count()
    elif between:
        plans = math.lcm(*(_level_count(ref, vs) for ref in between))
    else:
        plans = default_plans or 1
    if plans < 1 or (distinct and model.count() == 0):
        raise UnsatisfiableShape("no plan satisfies the row constraints of this design")
    for ref in column_refs:
        n = _level_count(ref, vs)
        if plans % n:
            raise UnsatisfiableShape(
                f"balancing '{ref_name(ref)}' ({n} levels) across plans needs a multiple of {n} plans, got {plans}"
            )
    _check_cells(plans, trials)

    full = Scope.full(plans, trials)
    constraints = [Constraint(kind, ref, full, level, exact) for kind, ref, level, exact in row_constraints]
    constraints += [Constraint(ConstraintKind.COLUMN_BALANCE, ref, full) for ref in column_refs]
    if distinct:
        constraints.append(Constraint(ConstraintKind.DISTINCT_ROWS, design_vs.names, full))
    return ResolvedDesign(
        (plans, trials), design_vs, tuple(constraints),
        distinct=distinct, declared=tuple(leaf.declared),
    )


def shape_of_cross(left: ResolvedDesign, right: ResolvedDesign) -> Tuple[int, int]:
    if left.trials != right.trials:
        raise CrossArityMismatch(
            f"cross needs equal trial counts, got {left.trials} and {right.trials}"
        )
    left.variable_set.union(right.variable_set)
    return left.plans * right.plans, left.trials


def shape_of_nest(inner: ResolvedDesign, outer: ResolvedDesign) -> Tuple[int, int]:
    outer.variable_set.union(inner.variable_set)
    return outer.plans * inner.plans, outer.trials * inner.trials


def _lift_cross(
    child: ResolvedDesign, rows: Callable[[int], Iterable[int]], copies: int,
) -> List[Constraint]:
    """Child constraints over the crossed rows; each child row becomes ``copies`` rows."""
    lifted = []
    for c in child.constraints:
        scope = c.scope.map(rows, lambda col: col)
        scope = Scope(tuple(sorted(scope.rows)), scope.cols)
        if c.kind in (ConstraintKind.DISTINCT_ROWS, ConstraintKind.CROSS_REPLICATION):
            lifted.append(replace(c, scope=scope, repeat=c.repeat * copies))
        else:
            lifted.append(replace(c, scope=scope))
    if child.variable_set.names:
        lifted.append(Constraint(
            ConstraintKind.CROSS_REPLICATION, child.variable_set.names,
            Scope.full(child.plans * copies, child.trials), repeat=copies,
        ))
    return lifted


def _resolve_cross(left: ResolvedDesign, right: ResolvedDesign) -> ResolvedDesign:
    plans, trials = shape_of_cross(left, right)
    _check_cells(plans, trials)
    pl, pr = left.plans, right.plans
    constraints = _lift_cross(left, lambda i: range(i * pr, (i + 1) * pr), pr)
    constraints += _lift_cross(right, lambda j: (i * pr + j for i in range(pl)), pl)
    vs = left.variable_set.union(right.variable_set)
    distinct = left.distinct and right.distinct
    if distinct:
        constraints.append(Constraint(ConstraintKind.DISTINCT_ROWS, vs.names, Scope.full(plans, trials)))
    return ResolvedDesign(
        (plans, trials), vs, tuple(constraints),
        kind="cross", children=(left, right), distinct=distinct,
        algebraic=left.algebraic and right.algebraic,
    )


def _resolve_nest(inner: ResolvedDesign, outer: ResolvedDesign) -> ResolvedDesign:
    plans, trials = shape_of_nest(inner, outer)
    _check_cells(plans, trials)
    pi, ti = inner.shape
    constraints: List[Constraint] = []
    for c in outer.constraints:
        scope = c.scope.map(lambda r: (r * pi,), lambda col: col * ti)
        constraints.append(replace(c, scope=scope))
    tree = BlockTree(
        shape=(plans, trials), grid=outer.shape, block_shape=inner.shape,
        outer_variables=outer.variable_set.names,
        inner=inner.block_tree, outer=outer.block_tree,
    )
    for br in range(outer.plans):
        for bc in range(outer.trials):
            for c in inner.constraints:
                scope = c.scope.map(lambda r: (br * pi + r,), lambda col: bc * ti + col)
                constraints.append(replace(c, scope=scope))
    if outer.variable_set.names:
        for block in tree.blocks():
            constraints.append(Constraint(ConstraintKind.BLOCK_CONSTANT, outer.variable_set.names, block))
    return ResolvedDesign(
        (plans, trials), outer.variable_set.union(inner.variable_set), tuple(constraints),
        block_tree=tree, kind="nest", children=(inner, outer),
        distinct=inner.distinct and outer.distinct,
        algebraic=inner.algebraic and outer.algebraic,
    )


def _partial_nesting(inner: DesignAst, vs: VariableSet) -> Optional[str]:
    """Name of a variable the inner design would show only partly in each block."""
    base, methods = unchain(inner)
    if isinstance(base, Cross):
        return _partial_nesting(base.left, vs) or _partial_nesting(base.right, vs)
    if isinstance(base, Nest):
        return _partial_nesting(base.inner, vs) or _partial_nesting(base.outer, vs)
    trials = next((m.count for m in reversed(methods) if isinstance(m, NumTrials)), None)
    if trials is None:
        return None
    for method in methods:
        if isinstance(method, (Counterbalance, WithinSubjects)) and trials < _level_count(method.variable, vs):
            return ref_name(method.variable)
    return None


def _apply_composite_methods(rd: ResolvedDesign, methods) -> ResolvedDesign:
    constraints = list(rd.constraints)
    declared = list(rd.declared)
    algebraic = rd.algebraic
    for method in methods:
        if isinstance(method, LimitPlans):
            if method.count != rd.plans:
                raise UnsatisfiableShape(
                    f"limit_plans({method.count}) conflicts with the {rd.plans} plans of this {rd.kind}"
                )
        elif isinstance(method, NumTrials):
            if method.count != rd.trials:
                raise UnsatisfiableShape(
                    f"num_trials({method.count}) conflicts with the {rd.trials} trials of this {rd.kind}"
                )
        elif isinstance(method, StartWith):
            rd.variable_set.subset(method.variable)
            constraints.append(Constraint(
                ConstraintKind.FIXED_FIRST_COLUMN, method.variable,
                Scope.full(*rd.shape), method.level,
            ))
            declared.append(("start_with", method.variable, method.level))
            algebraic = False
        else:
            raise ResolveError(
                f"{type(method).__name__} cannot follow a {rd.kind}; apply it inside a sub-design",
                code="R006",
            )
    return ResolvedDesign(
        rd.shape, rd.variable_set, tuple(constraints), rd.block_tree, rd.kind,
        rd.children, rd.distinct, algebraic, tuple(declared),
    )


def _resolve(ast: DesignAst, vs: VariableSet, default_plans: Optional[int]) -> ResolvedDesign:
    base, methods = unchain(ast)
    if isinstance(base, Design):
        return _resolve_leaf(methods, vs, default_plans)
    if isinstance(base, Cross):
        rd = _resolve_cross(_resolve(base.left, vs, None), _resolve(base.right, vs, None))
    else:
        outer = _resolve(base.outer, vs, None)
        if outer.trials > 1:
            partial = _partial_nesting(base.inner, vs)
            if partial:
                raise PartialNestingUnsupported(
                    f"nesting shows only a subset of '{partial}' in each of {outer.trials} outer trials; "
                    "partial nesting is not supported"
                )
        rd = _resolve_nest(_resolve(base.inner, vs, None), outer)
    return _apply_composite_methods(rd, methods) if methods else rd


def resolve(ast: DesignAst, vs: VariableSet, unit_count: Optional[int] = None) -> ResolvedDesign:
    """Shape and constraints for a design.

    ``unit_count`` sets the plan count of a top-level within-subjects-only
    design without ``limit_plans`` (one plan per unit).
    """
    rd = _resolve(ast, vs, unit_count)
    for constraint in rd.constraints:
        if not constraint.scope.within(*rd.shape):
            raise ResolveError(f"constraint scope outside the matrix: {constraint.describe()}")
    logger.info(
        "Resolved %s design: %d plans x %d trials, %d constraints",
        rd.kind, rd.plans, rd.trials, len(rd.constraints),
    )
    return rd


# -- checking ----------------------------------------------------------------------------

def first_violation(constraint: Constraint, cells: np.ndarray, vs: VariableSet) -> Optional[Tuple[int, int]]:
    """Matrix coordinates of the first cell breaking ``constraint``, or None."""
    sub_vs = vs.subset(constraint.variables)
    table = vs.projection_table(sub_vs)
    rows, cols = list(constraint.scope.rows), list(constraint.scope.cols)
    if not rows or not cols:
        return None
    sub = table[np.asarray(cells)[np.ix_(rows, cols)]]
    kind = constraint.kind

    if kind is ConstraintKind.ROW_BALANCE:
        lo, hi = balance_bounds(len(cols), sub_vs.size)
        counts = (sub[:, :, None] == np.arange(sub_vs.size)).sum(axis=1)
        bad = np.flatnonzero(((counts < lo) | (counts > hi)).any(axis=1))
        return (rows[bad[0]], cols[0]) if bad.size else None
    if kind is ConstraintKind.COLUMN_BALANCE:
        lo, hi = balance_bounds(len(rows), sub_vs.size)
        counts = (sub[:, :, None] == np.arange(sub_vs.size)).sum(axis=0)
        bad = np.flatnonzero(((counts < lo) | (counts > hi)).any(axis=1))
        return (rows[0], cols[bad[0]]) if bad.size else None
    if kind is ConstraintKind.FIXED_FIRST_COLUMN:
        bad = np.flatnonzero(sub[:, 0] != level_code(sub_vs, constraint.level))
        return (rows[bad[0]], cols[0]) if bad.size else None
    if kind is ConstraintKind.CONSTANT_IN_ROW:
        bad = np.argwhere(sub != sub[:, :1])
        return (rows[bad[0][0]], cols[bad[0][1]]) if bad.size else None
    if kind is ConstraintKind.BLOCK_CONSTANT:
        bad = np.argwhere(sub != sub[0, 0])
        return (rows[bad[0][0]], cols[bad[0][1]]) if bad.size else None
    keys = [tuple(row) for row in sub.tolist()]
    if kind is ConstraintKind.CROSS_REPLICATION:
        totals = Counter(keys)
        bad = [i for i, key in enumerate(keys) if totals[key] % constraint.repeat]
        return (rows[bad[0]], cols[0]) if bad else None
    seen: Counter = Counter()
    for i, key in enumerate(keys):
        seen[key] += 1
        if seen[key] > constraint.repeat:
            return rows[i], cols[0]
    return None


def violation(rd: ResolvedDesign, cells: np.ndarray) -> Optional[Tuple[Constraint, Tuple[int, int]]]:
    """First constraint of ``rd`` the matrix breaks, with the offending cell."""
    if tuple(np.shape(cells)) != rd.shape:
        raise ShapeMismatch(f"matrix shape {tuple(np.shape(cells))} does not match the design shape {rd.shape}")
    for constraint in rd.constraints:
        where = first_violation(constraint, cells, rd.variable_set)
        if where is not None:
            return constraint, where
    return None
