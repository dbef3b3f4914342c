"""Lint plan matrices against design properties.

Every check returns a ``CheckResult`` naming the first offending cell;
``check_all`` runs the constraints of a resolved design, and ``classify``
describes a matrix without knowing how it was made.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from planner.constraints import BlockTree, Constraint, ResolvedDesign, first_violation, level_code
from planner.core import CompoundVariable, PlanMatrix, VarRef, VariableSet, as_ref, ref_name
from planner.errors import DivisibilityError, ShapeMismatch

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]
VarArg = Union[str, Sequence[str], CompoundVariable]


@dataclass(frozen=True)
class CheckResult:
    name: str
    variable: Optional[str]
    passed: bool
    detail: str
    first_violation: Optional[Cell] = None

    def to_dict(self) -> Dict[str, Any]:
        where = None
        if self.first_violation is not None:
            where = {"row": int(self.first_violation[0]), "col": int(self.first_violation[1])}
        return {
            "name": self.name,
            "variable": self.variable,
            "pass": self.passed,
            "detail": self.detail,
            "first_violation": where,
        }


@dataclass
class Report:
    checks: List[CheckResult]
    classification: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {"checks": [c.to_dict() for c in self.checks], "classification": self.classification}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _projection(m: PlanMatrix, var: VarArg) -> Tuple[np.ndarray, int, str]:
    ref = as_ref(var)
    sub = m.variable_set.subset(ref)
    return m.project(sub), sub.size, ref_name(ref)


def _result(name: str, variable: Optional[str], where: Optional[Cell], ok: str, bad: str) -> CheckResult:
    if where is None:
        return CheckResult(name, variable, True, ok)
    return CheckResult(name, variable, False, f"{bad} at row {where[0]}, col {where[1]}", where)


def _repeat_in_lines(codes: np.ndarray) -> Optional[Cell]:
    """First cell (row-major) whose level already appeared earlier in its row or column."""
    rows, cols = codes.shape
    for r in range(rows):
        for c in range(cols):
            value = codes[r, c]
            if value in codes[r, :c] or value in codes[:r, c]:
                return r, c
    return None


def _column_excess(codes: np.ndarray, levels: int, quota: int) -> Optional[Cell]:
    for c in range(codes.shape[1]):
        counts = np.bincount(codes[:, c], minlength=levels)
        if (counts != quota).any():
            seen = np.zeros(levels, dtype=np.int64)
            for r, value in enumerate(codes[:, c]):
                seen[value] += 1
                if seen[value] > quota:
                    return r, c
            return 0, c
    return None


def _row_excess(codes: np.ndarray, levels: int, quota: int) -> Optional[Cell]:
    found = _column_excess(codes.T, levels, quota)
    return None if found is None else (found[1], found[0])


def _duplicate_row(codes: np.ndarray) -> Optional[Cell]:
    seen = set()
    for r, row in enumerate(codes.tolist()):
        key = tuple(row)
        if key in seen:
            return r, 0
        seen.add(key)
    return None


def check_fisher_latin_square(m: PlanMatrix, var: VarArg) -> CheckResult:
    """Each level exactly once in every row and every column."""
    codes, levels, name = _projection(m, var)
    if not m.plans == m.trials == levels:
        raise ShapeMismatch(
            f"a Latin square over '{name}' needs {levels} x {levels} cells, got {m.plans} x {m.trials}"
        )
    return _result(
        "fisher_latin_square", name, _repeat_in_lines(codes),
        f"every level of {name} once per row and column", "level repeated",
    )


def check_apa_balance(m: PlanMatrix, var: VarArg) -> CheckResult:
    """Each level equally often at every trial position (columns only)."""
    codes, levels, name = _projection(m, var)
    if m.plans % levels:
        raise DivisibilityError(f"{m.plans} plans cannot hold the {levels} levels of '{name}' equally often")
    quota = m.plans // levels
    return _result(
        "apa_balance", name, _column_excess(codes, levels, quota),
        f"every level of {name} {quota} times per column", "column unbalanced",
    )


def check_counterbalance(m: PlanMatrix, var: VarArg) -> CheckResult:
    """Row balance and column balance of ``var``, with all plans distinct."""
    codes, levels, name = _projection(m, var)
    if m.trials % levels or m.plans % levels:
        raise DivisibilityError(
            f"a {m.plans} x {m.trials} matrix cannot balance the {levels} levels of '{name}'"
        )
    where = _row_excess(codes, levels, m.trials // levels)
    if where is not None:
        return _result("counterbalance", name, where, "", "row unbalanced")
    where = _column_excess(codes, levels, m.plans // levels)
    if where is not None:
        return _result("counterbalance", name, where, "", "column unbalanced")
    return _result(
        "counterbalance", name, _duplicate_row(m.cells),
        f"{name} balanced per row and column, plans distinct", "plan repeated",
    )


def check_within(m: PlanMatrix, var: VarArg) -> CheckResult:
    """Every plan shows at least two different levels."""
    codes, _, name = _projection(m, var)
    bad = np.flatnonzero((codes == codes[:, :1]).all(axis=1))
    where = (int(bad[0]), 0) if bad.size else None
    return _result("within", name, where, f"every plan varies {name}", "plan holds a single level")


def check_between(m: PlanMatrix, var: VarArg) -> CheckResult:
    """Every plan keeps one level throughout."""
    codes, _, name = _projection(m, var)
    bad = np.argwhere(codes != codes[:, :1])
    where = (int(bad[0][0]), int(bad[0][1])) if bad.size else None
    return _result("between", name, where, f"every plan keeps one level of {name}", "level changes")


def check_start_with(m: PlanMatrix, var: VarArg, level: str) -> CheckResult:
    codes, _, name = _projection(m, var)
    expected = level_code(m.variable_set.subset(as_ref(var)), level)
    bad = np.flatnonzero(codes[:, 0] != expected)
    where = (int(bad[0]), 0) if bad.size else None
    return _result("start_with", name, where, f"every plan starts with {level}", f"plan does not start with {level}")


def _tree_blocks(tree: BlockTree, r0: int, c0: int, h: int, w: int) -> Iterator[Tuple[range, range, VarRef]]:
    bp, bt = tree.block_shape
    for br in range(tree.grid[0]):
        for bc in range(tree.grid[1]):
            rows = range(r0 + br * bp * h, r0 + (br + 1) * bp * h)
            cols = range(c0 + bc * bt * w, c0 + (bc + 1) * bt * w)
            if tree.outer_variables:
                yield rows, cols, tree.outer_variables
            if tree.inner is not None:
                yield from _tree_blocks(tree.inner, rows.start, cols.start, h, w)
    if tree.outer is not None:
        yield from _tree_blocks(tree.outer, r0, c0, h * bp, w * bt)


def check_block_structure(m: PlanMatrix, tree: BlockTree) -> CheckResult:
    """Outer variables constant inside every nested block."""
    bp, bt = tree.block_shape
    if (tree.grid[0] * bp, tree.grid[1] * bt) != m.shape:
        raise ShapeMismatch(f"block grid {tree.grid} of {tree.block_shape} blocks does not tile {m.shape}")
    for rows, cols, names in _tree_blocks(tree, 0, 0, 1, 1):
        codes = m.project(names)[np.ix_(list(rows), list(cols))]
        bad = np.argwhere(codes != codes[0, 0])
        if bad.size:
            where = (rows.start + int(bad[0][0]), cols.start + int(bad[0][1]))
            return _result("block_structure", ref_name(names), where, "", "outer level changes inside a block")
    return CheckResult("block_structure", None, True, f"{tree.grid[0]} x {tree.grid[1]} blocks of {bp} x {bt}")


def check_constraint(m: PlanMatrix, constraint: Constraint) -> CheckResult:
    where = first_violation(constraint, m.cells, m.variable_set)
    name = ref_name(constraint.variables) or None
    return _result(constraint.kind.value, name, where, constraint.describe(), f"{constraint.kind.value} broken")


def check_all(m: PlanMatrix, rd: ResolvedDesign) -> List[CheckResult]:
    """Shape, every constraint of ``rd`` (grouped by family and variable), and block structure."""
    if m.shape != rd.shape:
        return [CheckResult(
            "shape", None, False, f"expected {rd.plans} x {rd.trials}, got {m.plans} x {m.trials}", (0, 0),
        )]
    m = PlanMatrix(m.project(rd.variable_set), rd.variable_set)
    results = [CheckResult("shape", None, True, f"{rd.plans} x {rd.trials}")]
    groups: Dict[Tuple[str, VarRef, Optional[str]], List[Constraint]] = {}
    for constraint in rd.constraints:
        groups.setdefault((constraint.kind.value, constraint.variables, constraint.level), []).append(constraint)
    for (kind, variables, _), members in groups.items():
        failed = next((r for r in (check_constraint(m, c) for c in members) if not r.passed), None)
        if failed is not None:
            results.append(failed)
        else:
            scopes = f"{len(members)} scope{'s' if len(members) > 1 else ''}"
            results.append(CheckResult(kind, ref_name(variables) or None, True, f"{members[0].describe()} ({scopes})"))
    if rd.block_tree is not None:
        results.append(check_block_structure(m, rd.block_tree))
    failed = sum(not r.passed for r in results)
    logger.info("Ran %d checks, %d failed", len(results), failed)
    return results


# -- classification ------------------------------------------------------------------

def _balanced(counts: np.ndarray, width: int, levels: int) -> bool:
    return width % levels == 0 and bool((counts == width // levels).all())


def _describe(codes: np.ndarray, levels: int, names: Sequence[str]) -> Dict[str, Any]:
    plans, trials = codes.shape
    level_range = np.arange(levels)
    row_counts = (codes[:, :, None] == level_range).sum(axis=1)
    col_counts = (codes[:, :, None] == level_range).sum(axis=0)
    row_balanced = _balanced(row_counts, trials, levels)
    column_balanced = _balanced(col_counts, plans, levels)
    seen = int(np.unique(codes).size)
    summary: Dict[str, Any] = {
        "levels_seen": seen,
        "row_balanced": row_balanced,
        "column_balanced": column_balanced,
    }
    if (codes == codes[:, :1]).all():
        summary["assignment"] = "between"
        summary["labels"] = ["between"]
        return summary
    labels = []
    if row_balanced and column_balanced:
        labels.append("counterbalanced")
        if plans == trials == levels:
            labels.append("latin-square")
    else:
        labels.append("within-random")
    if plans > 1 and (codes[:, 0] == codes[0, 0]).all():
        labels.append(f"starts-with:{names[int(codes[0, 0])]}")
    summary["assignment"] = "within"
    summary["labels"] = labels
    return summary


def _block_shape(codes: np.ndarray) -> Optional[Tuple[int, int]]:
    """Largest proper block size (rows, cols) on which ``codes`` is constant."""
    plans, trials = codes.shape
    best = None
    for bp in range(1, plans + 1):
        if plans % bp:
            continue
        for bt in range(1, trials):
            if trials % bt or (bp, bt) == (1, 1):
                continue
            blocks = codes.reshape(plans // bp, bp, trials // bt, bt)
            if (blocks == blocks[:, :1, :, :1]).all():
                if best is None or (bp * bt, bt) > (best[0] * best[1], best[1]):
                    best = (bp, bt)
    return best


def classify(m: PlanMatrix, vs: Optional[VariableSet] = None) -> Dict[str, Any]:
    """Per-variable design summary plus any nested block structure."""
    vs = vs or m.variable_set
    m = m.reorder(vs)
    variables: Dict[str, Any] = {}
    refs: List[VarRef] = [(v.name,) for v in m.variable_set]
    if len(m.variable_set) > 1:
        refs.append(m.variable_set.names)
    for ref in refs:
        sub = m.variable_set.subset(ref)
        names = [sub.render(code) for code in range(sub.size)]
        variables[ref_name(ref)] = _describe(m.project(sub), sub.size, names)

    shapes: Dict[Tuple[int, int], List[str]] = {}
    for v in m.variable_set:
        codes = m.project((v.name,))
        if (codes == codes[:, :1]).all():
            continue
        shape = _block_shape(codes)
        if shape is not None:
            shapes.setdefault(shape, []).append(v.name)
    blocks = [
        {
            "variables": names,
            "block_shape": [bp, bt],
            "grid": [m.plans // bp, m.trials // bt],
        }
        for (bp, bt), names in sorted(shapes.items())
    ]
    return {"shape": [m.plans, m.trials], "variables": variables, "blocks": blocks}


def report(m: PlanMatrix, rd: ResolvedDesign, vs: Optional[VariableSet] = None) -> Report:
    return Report(check_all(m, rd), classify(m, vs))
