"""Exception hierarchy for the planner.

Every error carries a stable ``code`` for machine-readable reports and the
``exit_code`` the command line uses when the error escapes a command.
"""

from typing import Optional


class PlanetError(Exception):
    """Base class for every planner failure."""

    code = "E000"
    exit_code = 2

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


# -- core ------------------------------------------------------------------

class InvalidLevel(PlanetError):
    code = "C001"


class ProjectionError(PlanetError):
    code = "C002"


class VariableOverlap(PlanetError):
    code = "C003"


# -- dsl -------------------------------------------------------------------

class ParseError(PlanetError):
    """Diagnostic raised by the design-language parser."""

    code = "P001"
    exit_code = 1

    def __init__(self, message: str, line: int = 0, column: int = 0, code: Optional[str] = None):
        super().__init__(message, code)
        self.line = line
        self.column = column

    def __str__(self) -> str:
        return f"{self.code}: line {self.line}, column {self.column}: {self.message}"


# -- constraints -----------------------------------------------------------

class ResolveError(PlanetError):
    code = "R000"
    exit_code = 2


class UnsatisfiableShape(ResolveError):
    code = "R001"


class MissingTrialCount(ResolveError):
    code = "R002"


class CrossArityMismatch(ResolveError):
    code = "R003"


class PartialNestingUnsupported(ResolveError):
    code = "R004"


class DesignTooLarge(ResolveError):
    code = "R005"
    exit_code = 7


# -- solver ----------------------------------------------------------------

class Unsatisfiable(PlanetError):
    code = "S001"
    exit_code = 3

    def __init__(self, message: str, family: Optional[str] = None):
        super().__init__(message)
        self.family = family


class SolverTimeout(PlanetError):
    code = "S002"
    exit_code = 4


# -- assign ----------------------------------------------------------------

class UnevenPartition(PlanetError):
    code = "A001"
    exit_code = 5


# -- verify ----------------------------------------------------------------

class VerifyError(PlanetError):
    code = "V000"
    exit_code = 6


class ShapeMismatch(VerifyError):
    code = "V001"


class DivisibilityError(VerifyError):
    code = "V002"
