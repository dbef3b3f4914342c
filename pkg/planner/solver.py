"""Plan-matrix solver.

Cross and nest are composed algebraically from child solutions; everything
else goes through an iterative backtracking search that fills cells in
row-major order and forward-checks each constraint family as it goes.
"""

from __future__ import annotations

import logging
import time
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .constraints import (
    ROW_LOCAL,
    Constraint,
    ConstraintKind,
    ResolvedDesign,
    RowModel,
    balance_bounds,
    level_code,
    violation,
)
from .core import PlanMatrix
from .errors import CrossArityMismatch, DesignTooLarge, PlanetError, SolverTimeout, Unsatisfiable

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECS = 60.0
DEFAULT_MAX_CELLS = 64
NEST_MODES = ("kron", "scoped")

_TICK = 1024


# -- per-cell checkers ---------------------------------------------------------------

class _Line:
    """Level counts along one scoped row or column."""

    __slots__ = ("family", "table", "lo", "hi", "counts", "deficit", "remaining")

    def __init__(self, family: str, table: List[int], levels: int, length: int):
        self.family = family
        self.table = table
        self.lo, self.hi = balance_bounds(length, levels)
        self.counts = [0] * levels
        self.deficit = self.lo * levels
        self.remaining = length

    def admits(self, code: int) -> bool:
        n = self.counts[self.table[code]]
        if n >= self.hi:
            return False
        deficit = self.deficit - 1 if n < self.lo else self.deficit
        return deficit <= self.remaining - 1

    def push(self, code: int) -> None:
        level = self.table[code]
        if self.counts[level] < self.lo:
            self.deficit -= 1
        self.counts[level] += 1
        self.remaining -= 1

    def pop(self, code: int) -> None:
        level = self.table[code]
        self.counts[level] -= 1
        if self.counts[level] < self.lo:
            self.deficit += 1
        self.remaining += 1


class _Group:
    """Cells that must share one projected level."""

    __slots__ = ("family", "table", "value", "filled")

    def __init__(self, family: str, table: List[int]):
        self.family = family
        self.table = table
        self.value = -1
        self.filled = 0

    def admits(self, code: int) -> bool:
        return self.value < 0 or self.table[code] == self.value

    def push(self, code: int) -> None:
        if self.filled == 0:
            self.value = self.table[code]
        self.filled += 1

    def pop(self, code: int) -> None:
        self.filled -= 1
        if self.filled == 0:
            self.value = -1


class _Prefixes:
    """Shared state of one DistinctRows constraint: rows seen per prefix."""

    def __init__(self, model: RowModel, repeat: int = 1):
        self.model = model
        self.repeat = repeat
        self.used: Dict[Tuple[int, ...], int] = {}
        self._capacity: Dict[Tuple[int, ...], int] = {}

    def capacity(self, prefix: Tuple[int, ...]) -> int:
        if prefix not in self._capacity:
            self._capacity[prefix] = self.model.completions(prefix) * self.repeat
        return self._capacity[prefix]


class _DistinctRow:
    """One scoped row of a DistinctRows constraint."""

    __slots__ = ("family", "table", "shared", "prefix")

    def __init__(self, table: List[int], shared: _Prefixes):
        self.family = ConstraintKind.DISTINCT_ROWS.value
        self.table = table
        self.shared = shared
        self.prefix: Tuple[int, ...] = ()

    def admits(self, code: int) -> bool:
        key = self.prefix + (self.table[code],)
        return self.shared.used.get(key, 0) < self.shared.capacity(key)

    def push(self, code: int) -> None:
        self.prefix = self.prefix + (self.table[code],)
        used = self.shared.used
        used[self.prefix] = used.get(self.prefix, 0) + 1

    def pop(self, code: int) -> None:
        self.shared.used[self.prefix] -= 1
        self.prefix = self.prefix[:-1]


class _Tally:
    """Shared state of one CrossReplication constraint: completed rows per projection."""

    def __init__(self, repeat: int, height: int):
        self.repeat = repeat
        self.open = height
        self.counts: Dict[Tuple[int, ...], int] = {}
        self.shortfall = 0

    def shortfall_after(self, key: Tuple[int, ...]) -> int:
        n = self.counts.get(key, 0)
        return self.shortfall - (-n % self.repeat) + (-(n + 1) % self.repeat)

    def add(self, key: Tuple[int, ...]) -> None:
        self.shortfall = self.shortfall_after(key)
        self.counts[key] = self.counts.get(key, 0) + 1
        self.open -= 1

    def remove(self, key: Tuple[int, ...]) -> None:
        n = self.counts[key] - 1
        self.shortfall += (-n % self.repeat) - (-(n + 1) % self.repeat)
        self.counts[key] = n
        self.open += 1


class _Replica:
    """One scoped row of a CrossReplication constraint."""

    __slots__ = ("family", "table", "shared", "width", "prefix")

    def __init__(self, table: List[int], shared: _Tally, width: int):
        self.family = ConstraintKind.CROSS_REPLICATION.value
        self.table = table
        self.shared = shared
        self.width = width
        self.prefix: Tuple[int, ...] = ()

    def admits(self, code: int) -> bool:
        if len(self.prefix) + 1 < self.width:
            return True
        # each remaining row can close at most one missing copy
        key = self.prefix + (self.table[code],)
        return self.shared.shortfall_after(key) <= self.shared.open - 1

    def push(self, code: int) -> None:
        self.prefix = self.prefix + (self.table[code],)
        if len(self.prefix) == self.width:
            self.shared.add(self.prefix)

    def pop(self, code: int) -> None:
        if len(self.prefix) == self.width:
            self.shared.remove(self.prefix)
        self.prefix = self.prefix[:-1]


def _redundant_distinct(constraint: Constraint, rd: ResolvedDesign) -> bool:
    # a column in which every level occurs at most once already separates the rows
    if constraint.repeat > 1:
        return False
    names = set(constraint.variables)
    for other in rd.constraints:
        if (
            other.kind is ConstraintKind.COLUMN_BALANCE
            and other.scope == constraint.scope
            and set(other.variables) <= names
            and balance_bounds(other.scope.height, rd.variable_set.subset(other.variables).size)[1] == 1
        ):
            return True
    return False


class _Search:
    """Row-major depth-first search over the cells of one resolved design."""

    def __init__(self, rd: ResolvedDesign, rng: Optional[np.random.Generator] = None,
                 deadline: Optional[float] = None):
        self.rd = rd
        self.rng = rng
        self.deadline = deadline
        self.nodes = 0
        self.deepest = -1
        self.family: Optional[str] = None
        plans, trials = rd.shape
        vs = rd.variable_set
        self.trials = trials
        self.cells = plans * trials
        self.domains: List[List[int]] = [list(range(vs.size)) for _ in range(self.cells)]
        self.checks: List[list] = [[] for _ in range(self.cells)]
        for constraint in rd.constraints:
            self._register(constraint)
        for checks in self.checks:
            checks.sort(key=lambda ch: isinstance(ch, (_DistinctRow, _Replica)))

    def _table(self, constraint: Constraint) -> List[int]:
        vs = self.rd.variable_set
        return vs.projection_table(vs.subset(constraint.variables)).tolist()

    def _register(self, constraint: Constraint) -> None:
        kind, scope, t = constraint.kind, constraint.scope, self.trials
        family = kind.value
        vs = self.rd.variable_set
        if kind is ConstraintKind.ROW_BALANCE:
            table, levels = self._table(constraint), vs.subset(constraint.variables).size
            for r in scope.rows:
                line = _Line(family, table, levels, scope.width)
                for c in scope.cols:
                    self.checks[r * t + c].append(line)
        elif kind is ConstraintKind.COLUMN_BALANCE:
            table, levels = self._table(constraint), vs.subset(constraint.variables).size
            for c in scope.cols:
                line = _Line(family, table, levels, scope.height)
                for r in scope.rows:
                    self.checks[r * t + c].append(line)
        elif kind is ConstraintKind.FIXED_FIRST_COLUMN:
            table = self._table(constraint)
            level = level_code(vs.subset(constraint.variables), constraint.level)
            for r in scope.rows:
                i = r * t + scope.cols[0]
                self.domains[i] = [code for code in self.domains[i] if table[code] == level]
        elif kind is ConstraintKind.CONSTANT_IN_ROW:
            table = self._table(constraint)
            for r in scope.rows:
                group = _Group(family, table)
                for c in scope.cols:
                    self.checks[r * t + c].append(group)
        elif kind is ConstraintKind.BLOCK_CONSTANT:
            group = _Group(family, self._table(constraint))
            for r in scope.rows:
                for c in scope.cols:
                    self.checks[r * t + c].append(group)
        elif kind is ConstraintKind.DISTINCT_ROWS:
            if _redundant_distinct(constraint, self.rd):
                return
            sub = vs.subset(constraint.variables)
            local = [
                other for other in self.rd.constraints
                if other.kind in ROW_LOCAL and other.scope == scope
                and set(other.variables) <= set(constraint.variables)
            ]
            shared = _Prefixes(RowModel(sub, local, scope.width), constraint.repeat)
            table = self._table(constraint)
            for r in scope.rows:
                row = _DistinctRow(table, shared)
                for c in scope.cols:
                    self.checks[r * t + c].append(row)
        elif kind is ConstraintKind.CROSS_REPLICATION:
            tally = _Tally(constraint.repeat, scope.height)
            table = self._table(constraint)
            for r in scope.rows:
                row = _Replica(table, tally, scope.width)
                for c in scope.cols:
                    self.checks[r * t + c].append(row)

    def _candidates(self, i: int) -> List[int]:
        domain = self.domains[i]
        if self.rng is None:
            return domain
        return [domain[j] for j in self.rng.permutation(len(domain))]

    def _tick(self) -> None:
        self.nodes += 1
        if self.deadline is not None and self.nodes % _TICK == 0 and time.monotonic() > self.deadline:
            raise SolverTimeout(f"search exceeded its time budget after {self.nodes} nodes")

    def solutions(self) -> Iterator[List[int]]:
        """Yield every satisfying assignment (the list is reused between yields)."""
        n = self.cells
        values = [-1] * n
        candidates: List[List[int]] = [[] for _ in range(n)]
        cursor = [0] * n
        candidates[0] = self._candidates(0)
        i = 0
        while i >= 0:
            self._tick()
            checks = self.checks[i]
            if values[i] >= 0:
                for ch in reversed(checks):
                    ch.pop(values[i])
                values[i] = -1
            cands, k = candidates[i], cursor[i]
            placed = -1
            while k < len(cands):
                code = cands[k]
                k += 1
                for ch in checks:
                    if not ch.admits(code):
                        if i >= self.deepest:
                            self.deepest, self.family = i, ch.family
                        break
                else:
                    placed = code
                    break
            cursor[i] = k
            if not cands and i >= self.deepest:
                self.deepest, self.family = i, ConstraintKind.FIXED_FIRST_COLUMN.value
            if placed < 0:
                i -= 1
                continue
            for ch in checks:
                ch.push(placed)
            values[i] = placed
            if i + 1 == n:
                yield values
            else:
                i += 1
                candidates[i] = self._candidates(i)
                cursor[i] = 0

    def matrix(self, values: List[int]) -> np.ndarray:
        return np.array(values, dtype=np.int64).reshape(self.rd.shape)


# -- algebraic composition ------------------------------------------------------------

def solve_cross(left: PlanMatrix, right: PlanMatrix) -> PlanMatrix:
    """Every (left row, right row) pair, cells combined column by column."""
    if left.trials != right.trials:
        raise CrossArityMismatch(f"cross needs equal trial counts, got {left.trials} and {right.trials}")
    vs = left.variable_set.union(right.variable_set)
    cells = (
        np.repeat(left.cells, right.plans, axis=0) * right.variable_set.size
        + np.tile(right.cells, (left.plans, 1))
    )
    return PlanMatrix(cells, vs)


def solve_nest_kron(inner: PlanMatrix, outer: PlanMatrix) -> PlanMatrix:
    """Kronecker composition: each outer cell expands into a copy of the inner matrix."""
    vs = outer.variable_set.union(inner.variable_set)
    ones_inner = np.ones(inner.shape, dtype=np.int64)
    ones_outer = np.ones(outer.shape, dtype=np.int64)
    cells = np.kron(outer.cells, ones_inner) * inner.variable_set.size + np.kron(ones_outer, inner.cells)
    return PlanMatrix(cells, vs)


# -- entry points -----------------------------------------------------------------------

def _deadline(timeout: Optional[float]) -> Optional[float]:
    return time.monotonic() + timeout if timeout else None


def _child_rngs(rng: np.random.Generator) -> List[np.random.Generator]:
    return [np.random.default_rng(int(s)) for s in rng.integers(2**63, size=2)]


def _search_one(rd: ResolvedDesign, rng: np.random.Generator, deadline: Optional[float]) -> PlanMatrix:
    search = _Search(rd, rng, deadline)
    for values in search.solutions():
        logger.debug("Search found a %dx%d matrix after %d nodes", rd.plans, rd.trials, search.nodes)
        return PlanMatrix(search.matrix(values), rd.variable_set)
    family = search.family or "shape"
    raise Unsatisfiable(f"no plan matrix satisfies the design ({family} fails first)", family=family)


def _solve(rd: ResolvedDesign, rng: np.random.Generator, nest_mode: str, deadline: Optional[float]) -> PlanMatrix:
    if rd.kind == "cross" and rd.algebraic:
        left_rng, right_rng = _child_rngs(rng)
        left, right = rd.children
        return solve_cross(_solve(left, left_rng, nest_mode, deadline), _solve(right, right_rng, nest_mode, deadline))
    if rd.kind == "nest" and rd.algebraic and nest_mode == "kron":
        inner_rng, outer_rng = _child_rngs(rng)
        inner, outer = rd.children
        return solve_nest_kron(_solve(inner, inner_rng, nest_mode, deadline), _solve(outer, outer_rng, nest_mode, deadline))
    return _search_one(rd, rng, deadline)


def solve(rd: ResolvedDesign, seed: int = 0, nest_mode: str = "kron",
          timeout: Optional[float] = DEFAULT_TIMEOUT_SECS) -> PlanMatrix:
    """One plan matrix satisfying ``rd``; the same seed always gives the same matrix."""
    if nest_mode not in NEST_MODES:
        raise ValueError(f"nest_mode must be one of {NEST_MODES}, got {nest_mode!r}")
    started = time.monotonic()
    rng = np.random.default_rng(seed)
    matrix = _solve(rd, rng, nest_mode, _deadline(timeout))
    broken = violation(rd, matrix.cells)
    if broken is not None:
        constraint, (row, col) = broken
        raise PlanetError(f"solver produced a matrix breaking {constraint.describe()} at row {row}, col {col}")
    logger.info("Solved %dx%d plan matrix in %.3fs (%s mode)", rd.plans, rd.trials, time.monotonic() - started, nest_mode)
    return matrix


def _guard(rd: ResolvedDesign, limit: Optional[int], max_cells: int) -> None:
    if rd.cells > max_cells and limit is None:
        raise DesignTooLarge(
            f"enumerating a {rd.plans}x{rd.trials} design exceeds the {max_cells}-cell cap; pass a limit"
        )


def enumerate(rd: ResolvedDesign, limit: Optional[int] = None, max_cells: int = DEFAULT_MAX_CELLS,
              timeout: Optional[float] = None) -> Iterator[PlanMatrix]:
    """Every matrix satisfying the constraints of ``rd``, row-major lexicographic by cell code.

    The size guard runs on the call itself; matrices are produced lazily.
    """
    _guard(rd, limit, max_cells)
    return _stream(_Search(rd, None, _deadline(timeout)), limit)


def _stream(search: _Search, limit: Optional[int]) -> Iterator[PlanMatrix]:
    rd = search.rd
    produced = 0
    if limit is not None and limit <= 0:
        return
    for values in search.solutions():
        produced += 1
        yield PlanMatrix(search.matrix(values), rd.variable_set)
        if limit is not None and produced >= limit:
            break
    logger.debug("Enumeration finished: %d matrices, %d nodes", produced, search.nodes)


def count(rd: ResolvedDesign, limit: Optional[int] = None, max_cells: int = DEFAULT_MAX_CELLS,
          timeout: Optional[float] = None) -> int:
    """Number of satisfying matrices, without building them."""
    _guard(rd, limit, max_cells)
    search = _Search(rd, None, _deadline(timeout))
    total = 0
    for _ in search.solutions():
        total += 1
        if limit is not None and total >= limit:
            break
    logger.info("Counted %d matrices for a %dx%d design (%d nodes)", total, rd.plans, rd.trials, search.nodes)
    return total
