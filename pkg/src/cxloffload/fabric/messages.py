from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from ..ir.types import LINE

KINDS = ("ReadReq", "ReadResp", "WriteReq", "WriteAck", "SliceSubmit", "SliceDone", "LineFill")
# messages that carry one cache line of memory data
DATA_KINDS = frozenset({"ReadResp", "WriteReq", "LineFill"})

# callbacks invoked on every constructed message (used by test-suite audits)
MESSAGE_OBSERVERS: list[Callable[[FabricMessage], None]] = []


class PayloadError(ValueError):
    pass


@dataclass(frozen=True)
class FabricMessage:
    """One fabric transfer.

    ``payload`` holds line data for data-bearing kinds; ``values`` holds the
    live-in values of a SliceSubmit or the live-out values of a SliceDone.
    ``wire_bytes`` is the serialized size used for bandwidth accounting.
    ``meta`` carries simulator bookkeeping that does not travel on the wire.
    """

    kind: str
    src: int
    dst: int
    issue_time: int
    deliver_time: int
    seq: int
    line: int | None = None
    payload: bytes = b""
    slice_id: int | None = None
    values: tuple[int, ...] = ()
    wire_bytes: int = 0
    meta: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind}")
        if self.kind in DATA_KINDS:
            if len(self.payload) != LINE:
                raise PayloadError(f"{self.kind} payload is {len(self.payload)} bytes, must be {LINE}")
            if self.line is None or self.line % LINE:
                raise PayloadError(f"{self.kind} needs a 64-byte aligned line address")
        elif self.payload:
            raise PayloadError(f"{self.kind} carries no line payload")
        if self.deliver_time < self.issue_time:
            raise ValueError("message delivered before it was issued")
        for obs in MESSAGE_OBSERVERS:
            obs(self)

    def log_line(self) -> str:
        line = "-" if self.line is None else f"{self.line:#x}"
        sid = "-" if self.slice_id is None else str(self.slice_id)
        return (f"{self.deliver_time} {self.seq} {self.kind} {self.src}->{self.dst} "
                f"issue={self.issue_time} line={line} slice={sid} bytes={self.wire_bytes}")


def wire_size(kind: str, n_values: int = 0, result_lines: int = 0) -> int:
    if kind in DATA_KINDS:
        return LINE
    if kind == "SliceSubmit":
        return 8 * n_values
    if kind == "SliceDone":
        return LINE * result_lines
    return 0
