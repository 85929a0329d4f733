"""Core configuration and the simulation report.

SimReport JSON schema (``format_version`` 1), all keys always present::

    format_version      int
    mode                "baseline" | "offload"
    seed                int
    workload_digest     str (filled in by the driver, "" otherwise)
    total_cycles        int
    issued              int   instructions entering the ROB
    committed           int
    stall_cycles        int   cycles without issue or commit blocked by a cause below
    stalls              {"l1_miss", "mshr_full", "rob_full", "awaiting_mailbox": int}
    l1                  {"hits", "misses", "slice_fills", "slice_drops": int}
    fabric              {message kind: delivered count}
    labels              {label id: {"hits": int, "first_hit": int}}
    slices              [{"id", "site", "submit", "complete", "consume", "window",
                          "retired_in_window", "utilization", "est_window",
                          "iterations"}]  one per dynamic instance
    load_trace          [[uid, address, value]] in commit order
    return_value        int | null
    trap                {"uid", "address", "reason"} | null
    max_rob             int
    max_mshr            int
    mailbox_backpressure int   cycles a SliceDone waited for mailbox space
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

STALL_CAUSES = ("l1_miss", "mshr_full", "rob_full", "awaiting_mailbox")


@dataclass(frozen=True)
class CoreConfig:
    rob: int = 64
    mshr: int = 8
    l1_size: int = 32768
    assoc: int = 8
    issue_width: int = 1
    mailbox_depth: int = 8

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"core parameter {f.name} must be > 0")
        if self.l1_size % (64 * self.assoc):
            raise ValueError("l1_size must be a multiple of 64 * assoc")


@dataclass
class SimReport:
    mode: str = "baseline"
    seed: int = 0
    workload_digest: str = ""
    total_cycles: int = 0
    issued: int = 0
    committed: int = 0
    stall_cycles: int = 0
    stalls: dict[str, int] = field(default_factory=lambda: {c: 0 for c in STALL_CAUSES})
    l1: dict[str, int] = field(default_factory=lambda: {"hits": 0, "misses": 0,
                                                          "slice_fills": 0, "slice_drops": 0})
    fabric: dict[str, int] = field(default_factory=dict)
    labels: dict[str, dict[str, int]] = field(default_factory=dict)
    slices: list[dict] = field(default_factory=list)
    load_trace: list[list[int]] = field(default_factory=list)
    return_value: int | None = None
    trap: dict | None = None
    max_rob: int = 0
    max_mshr: int = 0
    mailbox_backpressure: int = 0
    format_version: int = 1
    # not serialized
    message_log: list[str] = field(default_factory=list, repr=False)
    cycle_trace: list[str] = field(default_factory=list, repr=False)

    _TRANSIENT = ("message_log", "cycle_trace")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in self._TRANSIENT:
            d.pop(k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> SimReport:
        known = {f.name for f in fields(cls)} - set(cls._TRANSIENT)
        missing = known - set(d)
        if missing:
            raise ValueError(f"report is missing keys {sorted(missing)}")
        return cls(**{k: d[k] for k in known})

    @classmethod
    def from_json(cls, text: str) -> SimReport:
        return cls.from_dict(json.loads(text))

    def mean_utilization(self) -> float:
        windows = sum(s["window"] for s in self.slices)
        return sum(s["retired_in_window"] for s in self.slices) / windows if windows else 0.0


@dataclass(frozen=True)
class WindowMeasure:
    window: float          # mean realized window over the slice's dynamic instances
    utilization: float     # retired-in-window instructions / window cycles
    retired: int
    instances: int


def measure_window(report: SimReport, slice_id: int) -> WindowMeasure:
    rows = [r for r in report.slices if r["id"] == slice_id]
    if not rows:
        raise KeyError(f"slice {slice_id} does not appear in the report")
    if any(r["consume"] is None for r in rows):
        raise ValueError(f"slice {slice_id} was never consumed")
    total = sum(r["window"] for r in rows)
    retired = sum(r["retired_in_window"] for r in rows)
    return WindowMeasure(total / len(rows), retired / total if total else 0.0, retired, len(rows))
