"""In-core async loading engine: slice tickets, the mailbox and the resume path."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field

from ..fabric.messages import FabricMessage
from .cache import L1Cache

WAITING = "Waiting"          # issued, not started
EXECUTING = "Executing"      # started, result pending
AWAITING = "AwaitingMailbox"
READY = "Ready"              # result available, waiting for commit
DONE = "Done"


class MailboxError(RuntimeError):
    pass


@dataclass(eq=False)
class RobEntry:
    seq: int
    ins: object
    fn: str
    srcs: tuple = ()
    state: str = WAITING
    done_at: int | None = None
    value: int = 0
    outs: dict | None = None
    addr: int | None = None
    fault: str | None = None
    miss: bool = False
    mshr_blocked: bool = False
    loads: list = field(default_factory=list)   # slice load records delivered at resume

    def snapshot(self) -> str:
        return f"#{self.seq} {self.fn}: {self.ins} [{self.state}]"


@dataclass(eq=False)
class Ticket:
    slice_id: int
    submit_seq: int
    submit_cycle: int | None = None
    await_seq: int | None = None
    await_entry: RobEntry | None = None
    complete: int | None = None
    consume: int | None = None
    retired: int = 0
    executed: int = 0            # dynamic instructions run at the slice's site


@dataclass
class AsyncEngine:
    depth: int = 8
    tickets: dict[int, deque] = field(default_factory=lambda: defaultdict(deque))
    mailbox: deque = field(default_factory=deque)
    backlog: deque = field(default_factory=deque)        # SliceDone waiting for mailbox space
    fills: dict[int, deque] = field(default_factory=lambda: defaultdict(deque))
    incomplete: deque = field(default_factory=deque)     # SliceDone waiting for its LineFills

    def open_ticket(self, t: Ticket) -> None:
        self.tickets[t.slice_id].append(t)

    def ticket_for_await(self, sid: int) -> Ticket:
        for t in self.tickets[sid]:
            if t.await_entry is None:
                return t
        raise MailboxError(f"await for slice {sid} has no outstanding submit")

    def resumable(self, done: FabricMessage) -> bool:
        q = self.tickets.get(done.slice_id)
        return bool(q) and q[0].await_entry is not None

    def offer(self, done: FabricMessage) -> bool:
        """Accept a SliceDone into the mailbox; False means back-pressure."""
        if len(self.mailbox) >= self.depth:
            return False
        self.mailbox.append(done)
        return True


def _fill_newest_first(l1: L1Cache, lines: list[tuple[int, bytes]]) -> tuple[int, int]:
    """Fill ``lines`` (newest first); per set only the newest ``assoc`` lines fit."""
    per_set: dict[int, list[tuple[int, bytes]]] = defaultdict(list)
    dropped = 0
    for line, payload in lines:
        bucket = per_set[l1.set_of(line)]
        if len(bucket) < l1.assoc:
            bucket.append((line, payload))
        else:
            dropped += 1
    filled = 0
    for bucket in per_set.values():
        for line, payload in reversed(bucket):   # oldest first so the newest ends most recent
            l1.fill(line, payload)
            filled += 1
    return filled, dropped


def mailbox_resume(engine: AsyncEngine, rob: deque, l1: L1Cache, done: FabricMessage,
                   lines: list[tuple[int, bytes]], now: int, *, check: bool = True
                   ) -> tuple[Ticket, int, int]:
    """Deliver a SliceDone to its parked await entry.

    Flips only that entry (AwaitingMailbox -> Ready, or faulted on an error
    payload) and updates L1; returns the retired ticket and the number of
    lines filled and dropped.
    """
    q = engine.tickets.get(done.slice_id)
    if not q:
        raise MailboxError(f"SliceDone for slice {done.slice_id} has no ticket")
    ticket = q.popleft()
    entry = ticket.await_entry
    if entry is None or entry.state != AWAITING:
        raise MailboxError(f"SliceDone for slice {done.slice_id} before its await was parked")
    before = [(e.seq, e.state) for e in rob if e is not entry] if check else None
    head = rob[0] if rob else None

    result = done.meta
    if result.error:
        entry.fault = f"offloaded slice {done.slice_id}: {result.error}"
    else:
        entry.outs = dict(zip(entry.ins.dests, done.values))
        entry.loads = list(result.loads)
    entry.state = READY
    entry.done_at = now
    ticket.consume = now
    ticket.complete = done.deliver_time
    ticket.executed = result.instructions
    for line in result.written:
        l1.invalidate(line)
    filled, dropped = _fill_newest_first(l1, lines)

    if check:
        after = [(e.seq, e.state) for e in rob if e is not entry]
        if after != before or (rob[0] if rob else None) is not head:
            raise AssertionError("mailbox resume disturbed ROB entries other than the await")
    return ticket, filled, dropped
