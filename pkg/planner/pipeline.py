"""Configuration, logging setup and the parse -> resolve -> solve -> assign -> verify pipeline."""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple

from . import solver
from .assign import STRICT, build_units, match
from .constraints import ResolvedDesign, resolve
from .core import AssignmentTable, PlanMatrix, VariableSet
from .parser import Program, parse

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
TIMEOUT_ENV = "PLANET_TIMEOUT_SECS"

DEFAULTS: Dict[str, Any] = {
    'solver_timeout_secs': solver.DEFAULT_TIMEOUT_SECS,
    'solver_nest_mode': 'kron',
    'enumerate_max_cells': solver.DEFAULT_MAX_CELLS,
    'assign_policy': STRICT,
    'log_level': 'INFO',
    'log_file': None,
}


def load_config(config_path: Optional[str] = "config.yaml") -> Dict[str, Any]:
    """Load configuration from YAML, falling back to defaults."""
    import yaml
    config = dict(DEFAULTS)
    if not config_path:
        return config
    try:
        with open(config_path, 'r') as f:
            config.update(yaml.safe_load(f) or {})
    except FileNotFoundError:
        logger.error(f"Config file not found: {config_path}")
    except Exception as e:
        logger.error(f"Error loading config: {e}")
    return config


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    """Send log records to stderr and, when configured, to a file."""
    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def resolve_timeout(flag: Optional[float], config: Dict[str, Any]) -> Optional[float]:
    """Solver budget in seconds: environment, then flag, then config file. 0 disables it."""
    raw = os.environ.get(TIMEOUT_ENV)
    if raw:
        try:
            value = float(raw)
        except ValueError:
            logger.error(f"Ignoring {TIMEOUT_ENV}={raw!r}: not a number")
        else:
            return value or None
    if flag is not None:
        return flag or None
    value = config.get('solver_timeout_secs', solver.DEFAULT_TIMEOUT_SECS)
    return float(value) if value else None


class Pipeline:
    """One design program carried through every stage."""

    def __init__(self, program: Program, config: Optional[Dict[str, Any]] = None):
        self.program = program
        self.config = dict(DEFAULTS, **(config or {}))
        self._resolved: Optional[ResolvedDesign] = None

    @classmethod
    def from_file(cls, path: str, config: Optional[Dict[str, Any]] = None) -> "Pipeline":
        source = Path(path).read_text(encoding="utf-8")
        logger.info(f"Parsing {path}")
        return cls(parse(source), config)

    @property
    def output_order(self) -> VariableSet:
        """Variables of the assigned design in declaration order; cell text follows it."""
        return self.program.design_variables()

    @property
    def units(self):
        return build_units(self.program.assigned_units)

    def resolve(self) -> ResolvedDesign:
        if self._resolved is None:
            self._resolved = resolve(
                self.program.assigned_design, self.program.variable_set, unit_count=len(self.units),
            )
        return self._resolved

    def solve(self, seed: int = 0, nest_mode: Optional[str] = None, timeout: Optional[float] = None) -> PlanMatrix:
        rd = self.resolve()
        mode = nest_mode or self.config.get('solver_nest_mode', 'kron')
        plans = solver.solve(rd, seed=seed, nest_mode=mode, timeout=timeout)
        return plans.reorder(self.output_order)

    def assign(self, seed: int, policy: Optional[str] = None, nest_mode: Optional[str] = None,
               timeout: Optional[float] = None) -> Tuple[PlanMatrix, AssignmentTable]:
        plans = self.solve(seed=seed, nest_mode=nest_mode, timeout=timeout)
        table = match(self.units, plans, seed, policy or self.config.get('assign_policy', STRICT))
        return plans, table

    def enumerate(self, limit: Optional[int] = None) -> Iterator[PlanMatrix]:
        max_cells = int(self.config.get('enumerate_max_cells', solver.DEFAULT_MAX_CELLS))
        for matrix in solver.enumerate(self.resolve(), limit=limit, max_cells=max_cells):
            yield matrix.reorder(self.output_order)

    def count(self, limit: Optional[int] = None) -> int:
        max_cells = int(self.config.get('enumerate_max_cells', solver.DEFAULT_MAX_CELLS))
        return solver.count(self.resolve(), limit=limit, max_cells=max_cells)
