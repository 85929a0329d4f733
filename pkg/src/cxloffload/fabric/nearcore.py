"""The weak in-order core placed at a switch or endpoint.

It runs one slice at a time, in arrival order. Its executor is written
independently of the reference interpreter so that the two can be checked
against each other.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..ir.memory import MemoryFault, MemoryImage
from ..ir.types import LINE
from .topology import Topology, path_latency

_MASK = (1 << 64) - 1
NEAR_STEP_BUDGET = 10**8


@dataclass
class NearCoreState:
    node: int
    near_cpi: float
    local_latency: float
    queue: deque = field(default_factory=deque)
    busy_until: float = 0
    running: tuple | None = None   # (finish time, submit message, NearResult)
    executed: int = 0


@dataclass
class NearResult:
    live_outs: dict[str, int]
    lines: list[int]               # every loaded line, newest first
    cycles: float
    loads: list[tuple[int, int, int]] = field(default_factory=list)   # (uid, address, value)
    written: list[int] = field(default_factory=list)
    error: str | None = None
    instructions: int = 0


def _signed(v: int) -> int:
    return v - (1 << 64) if v & (1 << 63) else v


def _cmp(pred: str, a: int, b: int) -> int:
    a, b = _signed(a), _signed(b)
    if pred == "eq":
        return int(a == b)
    if pred == "ne":
        return int(a != b)
    if pred == "lt":
        return int(a < b)
    if pred == "le":
        return int(a <= b)
    if pred == "gt":
        return int(a > b)
    return int(a >= b)


def access_latency(topo: Topology, nc: NearCoreState, addr: int) -> float:
    owner = topo.owner_of(addr)
    if owner is None:
        raise MemoryFault(addr, 0, "line not owned by any endpoint")
    if owner == nc.node:
        return nc.local_latency
    return 2 * path_latency(topo, nc.node, owner)


def near_execute(s, live_ins, mem: MemoryImage, nc: NearCoreState, topo: Topology) -> NearResult:
    """Run slice ``s`` at ``nc``; ``mem`` receives the slice's stores."""
    regs: dict[str, int] = dict(zip(s.live_ins, live_ins)) if not isinstance(live_ins, dict) \
        else dict(live_ins)
    last_touch: dict[int, int] = {}
    loads: list[tuple[int, int, int]] = []
    written: list[int] = []
    dyn = 0
    mem_cycles = 0.0
    tick = 0

    def val(a) -> int:
        return a & _MASK if isinstance(a, int) else regs[a]

    def finish(error: str | None = None) -> NearResult:
        lines = sorted(last_touch, key=lambda ln: -last_touch[ln])
        outs = {} if error else {r: regs[r] for r in s.live_outs}
        return NearResult(outs, lines, dyn * nc.near_cpi + mem_cycles, loads, written, error, dyn)

    while True:
        for ins in s.instructions:
            dyn += 1
            if dyn > NEAR_STEP_BUDGET:
                return finish("near-core step budget exceeded")
            op = ins.op
            if op == "const":
                regs[ins.dests[0]] = ins.args[0] & _MASK
            elif op == "add":
                regs[ins.dests[0]] = (val(ins.args[0]) + val(ins.args[1])) & _MASK
            elif op == "mul":
                regs[ins.dests[0]] = (val(ins.args[0]) * val(ins.args[1])) & _MASK
            elif op == "cmp":
                regs[ins.dests[0]] = _cmp(ins.target, val(ins.args[0]), val(ins.args[1]))
            elif op in ("load", "store"):
                addr = val(ins.args[0])
                try:
                    mem.check_access(addr, ins.size)
                    mem_cycles += access_latency(topo, nc, addr)
                except MemoryFault as fault:
                    return finish(f"{fault} (uid {ins.uid})")
                line = addr - addr % LINE
                if op == "load":
                    raw = mem.read_line(line)
                    off = addr - line
                    value = int.from_bytes(raw[off:off + min(ins.size, 8)], "little")
                    regs[ins.dests[0]] = value
                    loads.append((ins.uid, addr, value))
                    tick += 1
                    last_touch[line] = tick
                else:
                    mem.write(addr, val(ins.args[1]), ins.size)
                    if line not in written:
                        written.append(line)
            else:
                return finish(f"opcode {op} cannot run on the near core")
        if not s.is_loop or val(s.loop_cond) == 0:
            return finish()
