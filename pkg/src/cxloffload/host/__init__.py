"""Timing model of the host core with its in-core async loading engine."""

from .cache import L1Cache
from .engine import AsyncEngine, MailboxError, RobEntry, Ticket, mailbox_resume
from .report import STALL_CAUSES, CoreConfig, SimReport, WindowMeasure, measure_window
from .sim import OracleMismatch, SimulationDeadlock, oracle_check, simulate

__all__ = [
    "AsyncEngine", "CoreConfig", "L1Cache", "MailboxError", "OracleMismatch", "RobEntry",
    "STALL_CAUSES", "SimReport", "SimulationDeadlock", "Ticket", "WindowMeasure",
    "mailbox_resume", "measure_window", "oracle_check", "simulate",
]
