"""Mini-IR: program representation, text format, validator and reference interpreter."""

from .interp import (
    DEFAULT_STEP_BUDGET, ArchResult, LoadRecord, StepBudgetExceeded, Trap, interpret,
)
from .memory import MemoryFault, MemoryImage, line_of
from .text import format_instr, format_program, parse_program
from .types import (
    LINE, LOCAL, UNKNOWN, Diagnostic, Function, Instr, ParseError, Program,
    RegionDecl, Space, remote,
)
from .validate import validate

__all__ = [
    "ArchResult", "DEFAULT_STEP_BUDGET", "Diagnostic", "Function", "Instr", "LINE",
    "LOCAL", "LoadRecord", "MemoryFault", "MemoryImage", "ParseError", "Program",
    "RegionDecl", "Space", "StepBudgetExceeded", "Trap", "UNKNOWN", "format_instr",
    "format_program", "interpret", "line_of", "parse_program", "remote", "validate",
]
