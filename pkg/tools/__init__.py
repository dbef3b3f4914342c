"""Table I/O and plan verification."""

from .tables import assignment_frame, plans_frame, read_plans, to_csv_text, write_csv
from .verify import CheckResult, Report, check_all, classify, report

__all__ = [
    "assignment_frame", "plans_frame", "read_plans", "to_csv_text", "write_csv",
    "CheckResult", "Report", "check_all", "classify", "report",
]
