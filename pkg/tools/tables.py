"""CSV tables: plans.csv and assignment.csv, built and read with pandas."""

import io
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

import numpy as np
import pandas as pd

from planner.assign import emit_plan_table
from planner.core import AssignmentTable, PlanMatrix, VariableSet
from planner.errors import InvalidLevel

logger = logging.getLogger(__name__)

PathOrText = Union[str, Path]

WARNING_PREFIX = "# warning: "


def plans_frame(plans: PlanMatrix, order: Optional[VariableSet] = None) -> pd.DataFrame:
    """plan_id then trial_1..trial_T, cells rendered as level names."""
    columns = ["plan_id"] + [f"trial_{k}" for k in range(1, plans.trials + 1)]
    return pd.DataFrame(emit_plan_table(plans, order), columns=columns)


def assignment_frame(table: AssignmentTable) -> pd.DataFrame:
    records = [
        {
            "unit_id": row.unit_id,
            "members": ";".join(str(m) for m in row.members) if len(row.members) > 1 else "",
            "plan_id": row.plan_id,
        }
        for row in table.rows
    ]
    return pd.DataFrame(records, columns=["unit_id", "members", "plan_id"])


def to_csv_text(frame: pd.DataFrame, warnings: Iterable[str] = ()) -> str:
    """RFC-4180 text with LF endings; warnings become leading '# warning:' lines."""
    header = "".join(f"{WARNING_PREFIX}{w}\n" for w in warnings)
    return header + frame.to_csv(index=False, lineterminator="\n")


def write_csv(frame: pd.DataFrame, path: PathOrText, warnings: Iterable[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv_text(frame, warnings), encoding="utf-8", newline="")
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def _text(source: PathOrText) -> str:
    if isinstance(source, Path) or "\n" not in str(source):
        return Path(source).read_text(encoding="utf-8")
    return str(source)


def _read(source: PathOrText) -> pd.DataFrame:
    # only the leading warning lines are comments; '#' may appear in level names
    text = _text(source)
    lines = text.splitlines()
    skip = next((i for i, line in enumerate(lines) if not line.startswith(WARNING_PREFIX)), len(lines))
    return pd.read_csv(io.StringIO(text), skiprows=skip, dtype=str, keep_default_na=False)


def read_plans(source: PathOrText, vs: VariableSet) -> PlanMatrix:
    """Parse a plans table back into condition codes over ``vs``.

    Cells must be level names joined with '-' in ``vs`` order; a leading
    ``plan_id`` column is optional.
    """
    frame = _read(source)
    if "plan_id" in frame.columns:
        frame = frame.drop(columns="plan_id")
    if frame.empty or len(frame.columns) == 0:
        raise InvalidLevel("plans table has no trial columns or no rows")
    lookup: Dict[str, int] = {vs.render(code): code for code in range(vs.size)}
    cells = np.zeros(frame.shape, dtype=np.int64)
    for r, row in enumerate(frame.itertuples(index=False)):
        for c, text in enumerate(row):
            text = text.strip()
            if text not in lookup:
                raise InvalidLevel(f"row {r}, column {frame.columns[c]}: '{text}' is not a condition of {vs.names}")
            cells[r, c] = lookup[text]
    return PlanMatrix(cells, vs)
