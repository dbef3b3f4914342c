"""Unit tables and plan assignment.

Units and a shuffled plan-id column are held as two SQLite tables and joined
on row number, the way the experiment's units table is matched to its plans.
"""

import logging
import math
import sqlite3
from typing import List, Optional, Tuple

import numpy as np

from .core import (
    AssignmentRow,
    AssignmentTable,
    AssignmentWarning,
    PlanMatrix,
    UnitRow,
    UnitTable,
    VariableSet,
)
from .errors import UnevenPartition
from .parser import Clusters, Units, UnitsSpec

logger = logging.getLogger(__name__)

STRICT = "strict"
ALLOW_UNEVEN = "allow_uneven"
POLICIES = (STRICT, ALLOW_UNEVEN)

UNEVEN_WARNING = "A101"


def build_units(spec: UnitsSpec) -> UnitTable:
    """One row per assignable unit; cluster rows list their members (numbered 1..k*m)."""
    if isinstance(spec, Clusters):
        if spec.count < 1 or spec.inner.count < 1:
            raise ValueError("cluster and member counts must be positive")
        size = spec.inner.count
        rows = tuple(
            UnitRow(k + 1, tuple(range(k * size + 1, (k + 1) * size + 1)))
            for k in range(spec.count)
        )
    elif isinstance(spec, Units):
        if spec.count < 1:
            raise ValueError("unit count must be positive")
        rows = tuple(UnitRow(i, (i,)) for i in range(1, spec.count + 1))
    else:
        raise TypeError(f"not a units specification: {spec!r}")
    return UnitTable(rows)


class AssignmentStore:
    """In-memory relational store for one units-to-plans join."""

    def __init__(self, db_path: str = ":memory:"):
        self.conn = sqlite3.connect(db_path)
        self._init_db()

    def _init_db(self):
        """Initialize database tables."""
        self.conn.execute("""
            CREATE TABLE units (
                row_num INTEGER PRIMARY KEY,
                unit_id INTEGER NOT NULL,
                members TEXT NOT NULL
            )
        """)
        self.conn.execute("""
            CREATE TABLE plan_slots (
                row_num INTEGER PRIMARY KEY,
                plan_id INTEGER NOT NULL
            )
        """)
        self.conn.commit()

    def load_units(self, units: UnitTable):
        self.conn.executemany(
            "INSERT INTO units (row_num, unit_id, members) VALUES (?, ?, ?)",
            [(i, row.unit_id, ";".join(str(m) for m in row.members)) for i, row in enumerate(units.rows)],
        )
        self.conn.commit()

    def load_plan_ids(self, plan_ids: List[int]):
        self.conn.executemany(
            "INSERT INTO plan_slots (row_num, plan_id) VALUES (?, ?)",
            list(enumerate(plan_ids)),
        )
        self.conn.commit()

    def join(self) -> List[Tuple[int, str, int]]:
        """Units matched to plan ids by row number, in unit order."""
        cursor = self.conn.execute("""
            SELECT u.unit_id, u.members, p.plan_id
            FROM units u JOIN plan_slots p ON u.row_num = p.row_num
            ORDER BY u.row_num
        """)
        return cursor.fetchall()

    def close(self):
        self.conn.close()


def plan_column(unit_count: int, plan_count: int, rng: np.random.Generator) -> List[int]:
    """Each plan id repeated ceil(N/p) times, Fisher-Yates shuffled, cut to N."""
    repeats = math.ceil(unit_count / plan_count)
    column = np.repeat(np.arange(plan_count, dtype=np.int64), repeats)
    rng.shuffle(column)
    return column[:unit_count].tolist()


def match(units: UnitTable, plans: PlanMatrix, seed: int, policy: str = STRICT) -> AssignmentTable:
    """Assign every unit one plan by joining units to a shuffled plan-id column."""
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    n, p = len(units), plans.plans
    if n < 1:
        raise ValueError("cannot assign an empty unit table")
    warnings: List[AssignmentWarning] = []
    if n % p:
        message = f"{n} units cannot be split evenly over {p} plans"
        if policy == STRICT:
            raise UnevenPartition(f"{message}; use a multiple of {p} units")
        wanted = math.ceil(n / p) * p
        warning = AssignmentWarning(
            UNEVEN_WARNING,
            f"{message}: some plans get {n // p} units and others {n // p + 1}; {wanted} units would balance them",
        )
        logger.warning(warning.message)
        warnings.append(warning)

    store = AssignmentStore()
    try:
        store.load_units(units)
        store.load_plan_ids(plan_column(n, p, np.random.default_rng(seed)))
        joined = store.join()
    finally:
        store.close()

    rows = tuple(
        AssignmentRow(unit_id, tuple(int(m) for m in members.split(";")), plan_id)
        for unit_id, members, plan_id in joined
    )
    logger.info("Assigned %d units to %d plans", n, p)
    return AssignmentTable(rows, p, tuple(warnings))


def emit_plan_table(plans: PlanMatrix, order: Optional[VariableSet] = None) -> List[List[str]]:
    """One row per plan: the 0-based plan id, then each trial's level names joined with '-'."""
    if order is not None:
        plans = plans.reorder(order)
    return [[str(plan_id)] + row for plan_id, row in enumerate(plans.render_rows("-"))]
