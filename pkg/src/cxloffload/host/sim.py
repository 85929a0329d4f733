"""Cycle-stepped timing model of the host core.

In-order issue (no speculation: issue stops at an unresolved branch),
out-of-order execution, in-order commit. Loads go through a set-associative
L1 and an MSHR; misses to lines owned by an endpoint cross the fabric, other
misses cost ``local_mem``. Stores write through at commit. ``submit_slice``
ships its live-ins to the slice's site and completes at once; ``await_mailbox``
parks in the ROB until the matching SliceDone comes through the mailbox.

A cycle with neither issue nor commit is a stall when something is blocked on
one of the four causes, checked in this order: a load refused by a full MSHR,
a full ROB, an await at the ROB head, an outstanding miss. Stretches where
nothing can change are skipped in one step with the same attribution.
"""

from __future__ import annotations

import heapq
import math
from collections import deque

from .. import FORMAT_VERSION
from ..analysis.cost import CostModel
from ..analysis.rewrite import OffloadedProgram, canonical_trace
from ..fabric.fabric import Fabric
from ..fabric.topology import Topology
from ..ir.interp import compare, interpret
from ..ir.memory import MemoryFault, MemoryImage, extract
from ..ir.types import LINE, Program, to_word
from .cache import L1Cache
from .engine import (
    AWAITING, EXECUTING, READY, WAITING, AsyncEngine, RobEntry, Ticket, mailbox_resume,
)
from .report import STALL_CAUSES, CoreConfig, SimReport


class OracleMismatch(AssertionError):
    pass


class SimulationDeadlock(RuntimeError):
    pass


class SimulationTrap(RuntimeError):
    pass


def _cycles(x: float) -> int:
    return int(math.ceil(x))


class _Frame:
    __slots__ = ("fn", "pc", "regs", "dest")

    def __init__(self, fn, regs, dest):
        self.fn = fn
        self.pc = 0
        self.regs = regs
        self.dest = dest


class _Sim:
    def __init__(self, program: Program, op: OffloadedProgram | None, mem: MemoryImage,
                 topo: Topology, cm: CostModel, cc: CoreConfig, inputs, warm_lines, trace: bool,
                 check: bool):
        self.p = program
        self.op = op
        self.mem = mem.copy()
        self.topo = topo
        self.cm = cm
        self.cc = cc
        self.check = check
        self.trace = trace
        self.l1 = L1Cache(cc.l1_size, cc.assoc)
        for line in warm_lines:
            line -= line % LINE
            self.l1.fill(line, self.mem.read_line(line))
        self.fabric = Fabric(topo, self.mem, near_cpi=cm.near_cpi, near_latency=cm.near_mem,
                             slices=op.slices if op else ())
        self.engine = AsyncEngine(cc.mailbox_depth)
        self.rob: deque[RobEntry] = deque()
        self.mshr: dict[int, list[RobEntry]] = {}
        self.local_fills: list[tuple[int, int]] = []
        self.funcs = {fn.name: fn for fn in program.functions}
        self.labels = {fn.name: fn.labels for fn in program.functions}
        self.report = SimReport(mode="offload" if op and op.slices else "baseline")
        self.report.format_version = FORMAT_VERSION
        self.seq = 0
        self.frames: list[_Frame] = []
        self.done_frontend = not program.functions
        self.return_ref = None
        self.branch_wait = None       # (ref, target pc, fallthrough pc)
        self.active: list[Ticket] = []
        self.slice_rows: list[dict] = []
        self.trap = None
        if program.functions:
            main = self.funcs["main"]
            self.frames.append(_Frame(main, {q: to_word((inputs or {}).get(q, 0)) for q in main.params},
                                      None))
        self.host = topo.host

    # --- operands ----------------------------------------------------------
    def ref(self, frame: _Frame, a):
        if isinstance(a, int):
            return to_word(a)
        return frame.regs.get(a, 0)

    @staticmethod
    def ready(ref, now: int) -> bool:
        if isinstance(ref, int):
            return True
        e = ref[0]
        return e.done_at is not None and e.done_at <= now

    @staticmethod
    def value(ref) -> int:
        if isinstance(ref, int):
            return ref
        e, key = ref
        return e.value if key is None else e.outs[key]

    @staticmethod
    def ready_time(ref):
        return None if isinstance(ref, int) else ref[0].done_at

    # --- phases ------------------------------------------------------------
    def deliver(self, now: int) -> bool:
        progress = False
        for msg in self.fabric.step(now):
            progress = True
            if msg.kind == "ReadResp":
                self.fill(msg.line, msg.payload, now)
            elif msg.kind == "LineFill":
                self.engine.fills[msg.slice_id].append((msg.line, msg.payload))
            elif msg.kind == "SliceDone":
                self.engine.incomplete.append(msg)
            elif msg.kind == "WriteAck":
                pass
            else:
                raise RuntimeError(f"host received unexpected {msg.kind}")
        while self.local_fills and self.local_fills[0][0] <= now:
            _, line = heapq.heappop(self.local_fills)
            self.fill(line, self.mem.read_line(line), now)
            progress = True
        # a SliceDone enters the mailbox once all of its line fills have arrived
        still = deque()
        for done in self.engine.incomplete:
            if len(self.engine.fills[done.slice_id]) >= len(done.meta.lines):
                self.engine.backlog.append(done)
            else:
                still.append(done)
        self.engine.incomplete = still
        return progress

    def fill(self, line: int, payload: bytes, now: int) -> None:
        self.l1.fill(line, payload)
        for e in self.mshr.pop(line, []):
            e.value = extract(payload, e.addr, e.ins.size)
            e.done_at = now
            e.miss = False

    def mailbox(self, now: int) -> bool:
        progress = False
        eng = self.engine
        while eng.backlog and eng.offer(eng.backlog[0]):
            eng.backlog.popleft()
            progress = True
        if eng.backlog:
            self.report.mailbox_backpressure += 1
        kept = deque()
        for done in eng.mailbox:
            if eng.resumable(done):
                n = len(done.meta.lines)
                fills = [eng.fills[done.slice_id].popleft() for _ in range(n)]
                ticket, filled, dropped = mailbox_resume(eng, self.rob, self.l1, done, fills, now,
                                                         check=self.check)
                self.report.l1["slice_fills"] += filled
                self.report.l1["slice_drops"] += dropped
                progress = True
            else:
                kept.append(done)
        eng.mailbox = kept
        return progress

    def commit(self, now: int) -> int:
        n = 0
        while self.rob and n < self.cc.issue_width:
            e = self.rob[0]
            if e.done_at is None or e.done_at > now:
                break
            if e.fault is not None:
                self.trap = {"uid": e.ins.uid, "address": e.addr, "reason": e.fault}
                return n
            op = e.ins.op
            if op == "store":
                self.mem.write(e.addr, e.value, e.ins.size)
                line = e.addr - e.addr % LINE
                payload = self.mem.read_line(line)
                self.l1.update(line, payload)
                owner = self.topo.owner_of(line)
                if owner is not None:
                    self.fabric.send("WriteReq", self.host, owner, now, line=line, payload=payload)
            elif op == "load":
                self.report.load_trace.append([e.ins.uid, e.addr, e.value])
            elif op == "await_mailbox":
                self.report.load_trace.extend([list(r) for r in e.loads])
                self.finish_ticket(e)
            self.rob.popleft()
            n += 1
            self.report.committed += 1
            for t in self.active:
                if (t.submit_seq < e.seq and (t.await_seq is None or e.seq < t.await_seq)
                        and t.submit_cycle is not None and now >= t.submit_cycle
                        and (t.consume is None or now <= t.consume)):
                    t.retired += 1
        return n

    def finish_ticket(self, e: RobEntry) -> None:
        for i, t in enumerate(self.active):
            if t.await_entry is e:
                self.active.pop(i)
                s = self.op.slice(t.slice_id)
                window = t.consume - t.submit_cycle
                self.slice_rows.append({
                    "id": t.slice_id, "site": str(s.site), "submit": t.submit_cycle,
                    "complete": t.complete, "consume": t.consume, "window": window,
                    "retired_in_window": t.retired,
                    "utilization": t.retired / window if window else 0.0,
                    "est_window": s.est_window,
                    "iterations": -(-t.executed // max(len(s.instructions), 1)),
                })
                return

    def execute(self, now: int) -> bool:
        progress = False
        oldest_store = None
        incomplete_load = None
        for e in self.rob:
            op = e.ins.op
            if e.state == WAITING:
                if all(self.ready(r, now) for r in e.srcs):
                    if self.start(e, now, oldest_store, incomplete_load):
                        progress = True
            if op == "store" and oldest_store is None:
                oldest_store = e
            if op == "load" and incomplete_load is None and (e.done_at is None or e.done_at > now):
                incomplete_load = e
        return progress

    def start(self, e: RobEntry, now: int, older_store, older_load) -> bool:
        ins = e.ins
        op = ins.op
        vals = [self.value(r) for r in e.srcs]
        cm = self.cm
        if op in ("const", "add", "mul", "cmp"):
            if op == "const":
                e.value = to_word(ins.args[0])
            elif op == "add":
                e.value = to_word(vals[0] + vals[1])
            elif op == "mul":
                e.value = to_word(vals[0] * vals[1])
            else:
                e.value = compare(ins.target, vals[0], vals[1])
            e.done_at = now + _cycles(cm.host_cpi)
            e.state = EXECUTING
            return True
        if op == "load":
            if older_store is not None:
                return False
            addr = vals[0]
            e.addr = addr
            try:
                self.mem.check_access(addr, ins.size)
            except MemoryFault as fault:
                e.fault = str(fault)
                e.done_at = now
                e.state = EXECUTING
                return True
            line = addr - addr % LINE
            payload = self.l1.lookup(line)
            if payload is not None:
                self.report.l1["hits"] += 1
                e.value = extract(payload, addr, ins.size)
                e.done_at = now + _cycles(cm.l1_hit)
                e.state = EXECUTING
                e.mshr_blocked = False
                return True
            if line in self.mshr:
                self.mshr[line].append(e)
            elif len(self.mshr) >= self.cc.mshr:
                e.mshr_blocked = True
                return False
            else:
                self.mshr[line] = [e]
                owner = self.topo.owner_of(line)
                if owner is None:
                    heapq.heappush(self.local_fills, (now + _cycles(cm.local_mem), line))
                else:
                    self.fabric.send("ReadReq", self.host, owner, now, line=line)
            self.report.l1["misses"] += 1
            e.miss = True
            e.mshr_blocked = False
            e.state = EXECUTING
            return True
        if op == "store":
            e.addr, e.value = vals[0], vals[1]
            try:
                self.mem.check_access(e.addr, ins.size)
            except MemoryFault as fault:
                e.fault = str(fault)
            e.done_at = now + 1
            e.state = EXECUTING
            return True
        if op == "submit_slice":
            s = self.op.slice(ins.imm)
            if older_store is not None or (s.has_stores and older_load is not None):
                return False
            ticket = next(t for t in self.active if t.submit_seq == e.seq)
            ticket.submit_cycle = now
            self.fabric.send("SliceSubmit", self.host, s.site.node, now + _cycles(cm.submit_overhead),
                             slice_id=s.id, values=tuple(vals))
            e.done_at = now + 1
            e.state = EXECUTING
            return True
        raise RuntimeError(f"cannot execute {op}")

    def issue(self, now: int) -> tuple[int, bool]:
        issued = 0
        progress = False
        while issued < self.cc.issue_width and not self.done_frontend:
            if self.branch_wait is not None:
                ref, taken_pc, next_pc = self.branch_wait
                if not self.ready(ref, now):
                    break
                self.frames[-1].pc = taken_pc if self.value(ref) != 0 else next_pc
                self.branch_wait = None
                progress = True
                continue
            frame = self.frames[-1]
            body = frame.fn.body
            if frame.pc >= len(body):
                self.do_return(None)
                progress = True
                continue
            ins = body[frame.pc]
            if ins.op == "label":
                frame.pc += 1
                continue
            if ins.op == "profile_label":
                row = self.report.labels.setdefault(str(ins.imm), {"hits": 0, "first_hit": now})
                row["hits"] += 1
                frame.pc += 1
                progress = True
                continue
            if len(self.rob) >= self.cc.rob:
                break
            e = RobEntry(self.seq, ins, frame.fn.name)
            self.seq += 1
            self.rob.append(e)
            issued += 1
            progress = True
            self.report.issued += 1
            op = ins.op
            if op in ("const", "add", "mul", "cmp", "load", "store", "submit_slice"):
                if op != "const":
                    e.srcs = tuple(self.ref(frame, a) for a in ins.args)
                for d in ins.dests:
                    frame.regs[d] = (e, None)
                if op == "submit_slice":
                    t = Ticket(ins.imm, e.seq)
                    self.engine.open_ticket(t)
                    self.active.append(t)
                frame.pc += 1
            elif op == "await_mailbox":
                t = self.engine.ticket_for_await(ins.imm)
                t.await_entry = e
                t.await_seq = e.seq
                e.state = AWAITING
                e.outs = {}
                for d in ins.dests:
                    frame.regs[d] = (e, d)
                frame.pc += 1
            elif op == "branch":
                e.done_at = now
                e.state = READY
                labels = self.labels[frame.fn.name]
                self.branch_wait = (self.ref(frame, ins.args[0]), labels[ins.target], frame.pc + 1)
            elif op == "jump":
                e.done_at = now
                e.state = READY
                frame.pc = self.labels[frame.fn.name][ins.target]
            elif op == "call":
                e.done_at = now
                e.state = READY
                callee = self.funcs[ins.target]
                args = [self.ref(frame, a) for a in ins.args]
                self.frames.append(_Frame(callee, dict(zip(callee.params, args)),
                                          ins.dests[0] if ins.dests else None))
            elif op == "ret":
                e.done_at = now
                e.state = READY
                self.do_return(self.ref(frame, ins.args[0]) if ins.args else None)
            else:
                raise RuntimeError(f"cannot issue {op}")
        return issued, progress

    def do_return(self, ref) -> None:
        frame = self.frames.pop()
        if not self.frames:
            self.return_ref = ref
            self.done_frontend = True
            return
        caller = self.frames[-1]
        if frame.dest is not None:
            caller.regs[frame.dest] = ref if ref is not None else 0
        caller.pc += 1

    # --- accounting --------------------------------------------------------
    def stall_cause(self) -> str | None:
        if any(e.mshr_blocked for e in self.rob):
            return "mshr_full"
        if len(self.rob) >= self.cc.rob and not self.done_frontend:
            return "rob_full"
        if self.rob and self.rob[0].state == AWAITING:
            return "awaiting_mailbox"
        if self.mshr or any(e.miss for e in self.rob):
            return "l1_miss"
        return None

    def next_event(self, now: int) -> int | None:
        times = []
        t = self.fabric.next_event_time()
        if t is not None:
            times.append(t)
        if self.local_fills:
            times.append(self.local_fills[0][0])
        for e in self.rob:
            if e.done_at is not None and e.done_at > now:
                times.append(e.done_at)
        if self.branch_wait is not None:
            rt = self.ready_time(self.branch_wait[0])
            if rt is not None and rt > now:
                times.append(rt)
        if self.engine.backlog and len(self.engine.mailbox) < self.engine.depth:
            times.append(now + 1)
        return min(times) if times else None

    def snapshot(self) -> str:
        rows = [e.snapshot() for e in self.rob]
        return "ROB:\n  " + "\n  ".join(rows or ["(empty)"]) + \
            f"\nMSHR: {sorted(hex(l) for l in self.mshr)}\nmailbox: {len(self.engine.mailbox)}"

    def account(self, cycles: int, cause: str | None) -> None:
        if cause is not None:
            self.report.stalls[cause] += cycles
            self.report.stall_cycles += cycles

    def run(self) -> SimReport:
        now = 0
        rep = self.report
        while True:
            if self.done_frontend and not self.rob:
                break
            progress = self.deliver(now)
            progress |= self.mailbox(now)
            committed = self.commit(now)
            if self.trap is not None:
                break
            progress |= self.execute(now)
            issued, ip = self.issue(now)
            progress |= ip or committed > 0
            if len(self.rob) > self.cc.rob or len(self.mshr) > self.cc.mshr:
                raise AssertionError(f"occupancy exceeded at cycle {now}: rob {len(self.rob)} "
                                     f"mshr {len(self.mshr)}")
            rep.max_rob = max(rep.max_rob, len(self.rob))
            rep.max_mshr = max(rep.max_mshr, len(self.mshr))
            cause = None
            if not issued and not committed:
                cause = self.stall_cause()
                self.account(1, cause)
            if self.trace:
                rep.cycle_trace.append(f"{now} issued={issued} committed={committed} "
                                       f"rob={len(self.rob)} mshr={len(self.mshr)} "
                                       f"stall={cause or '-'}")
            if progress:
                now += 1
                continue
            nxt = self.next_event(now)
            if nxt is None:
                raise SimulationDeadlock(f"no progress possible at cycle {now}\n{self.snapshot()}")
            if nxt > now + 1:
                skipped = nxt - now - 1
                idle_cause = self.stall_cause()
                self.account(skipped, idle_cause)
                if self.trace:
                    rep.cycle_trace.append(f"{now + 1}..{nxt - 1} idle stall={idle_cause or '-'}")
            now = nxt
        rep.total_cycles = now
        self.fabric.step(1 << 62)      # drain acknowledgements still in flight
        rep.fabric = dict(sorted(self.fabric.counts.items()))
        rep.message_log = self.fabric.log_lines()
        rep.slices = self.slice_rows
        if self.trap is not None:
            rep.trap = self.trap
        elif self.return_ref is not None:
            rep.return_value = self.value(self.return_ref) if self.ready(self.return_ref, now) else None
        return rep


def _original_of(prog) -> tuple[Program, OffloadedProgram | None]:
    if isinstance(prog, OffloadedProgram):
        return prog.source, prog
    return prog, None


def oracle_check(report: SimReport, original: Program, mem: MemoryImage, inputs=None) -> None:
    """Raise :class:`OracleMismatch` unless ``report`` matches the reference interpreter."""
    ref = interpret(original, mem, inputs)
    if (ref.trap is None) != (report.trap is None):
        raise OracleMismatch(f"trap mismatch: interpreter {ref.trap}, simulator {report.trap}")
    if ref.trap is not None:
        return
    want = canonical_trace(ref.load_trace)
    got = sorted((tuple(r) for r in report.load_trace), key=lambda r: r[0])
    for i, (x, y) in enumerate(zip(want, got)):
        if x != y:
            raise OracleMismatch(
                f"first divergent load #{i}: uid {x[0]} expected addr {x[1]:#x} value {x[2]:#x}, "
                f"simulated uid {y[0]} addr {y[1]:#x} value {y[2]:#x}")
    if len(want) != len(got):
        raise OracleMismatch(f"load count differs: interpreter {len(want)}, simulator {len(got)}")
    if ref.return_value != report.return_value:
        raise OracleMismatch(f"return value differs: {ref.return_value} vs {report.return_value}")


def simulate(prog: Program | OffloadedProgram, mem: MemoryImage, topo: Topology, cm: CostModel,
             cc: CoreConfig | None = None, seed: int = 0, *, inputs=None, warm_lines=(),
             trace: bool = False, check_oracle: bool = True) -> SimReport:
    """Simulate a baseline or offloaded program and return its report.

    The model is deterministic; ``seed`` is recorded in the report only.
    """
    cc = cc or CoreConfig()
    original, op = _original_of(prog)
    program = op.program if op else original
    topo = topo.with_ownership(original)
    topo.check_program(original)
    sim = _Sim(program, op, mem, topo, cm, cc, inputs, warm_lines, trace, check_oracle)
    report = sim.run()
    report.seed = seed
    if check_oracle:
        oracle_check(report, original, mem, inputs)
    return report


__all__ = ["OracleMismatch", "STALL_CAUSES", "SimulationDeadlock", "oracle_check", "simulate"]
