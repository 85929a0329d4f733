"""Offload rewrite: replace slices by submit_slice / await_mailbox pairs.

The submit is hoisted to the earliest point where every live-in is available;
the await sinks to the first instruction that needs a live-out. Instructions
left between the two form the slice's overlap region. A loop slice leaves its
residual (the part of the body not sent to the near core) as a host loop
inside the overlap region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir.interp import ArchResult, LoadRecord, Trap, interpret
from ..ir.memory import MemoryImage
from ..ir.types import LOCAL, Function, Instr, Program
from .labels import insert_profile_labels
from .slicing import OffloadSlice, slice_as_program

_MOTION_BARRIERS = frozenset({
    "label", "branch", "jump", "ret", "call", "profile_label", "submit_slice", "await_mailbox",
})


@dataclass(frozen=True)
class OffloadedProgram:
    program: Program
    slices: tuple[OffloadSlice, ...]
    overlap_regions: dict[int, range]
    source: Program
    inline: tuple[OffloadSlice, ...] = ()
    _by_id: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        self._by_id.update({s.id: s for s in self.all_slices})

    @property
    def all_slices(self) -> tuple[OffloadSlice, ...]:
        return tuple(sorted(self.slices + self.inline, key=lambda s: s.id))

    def slice(self, sid: int) -> OffloadSlice:
        return self._by_id[sid]

    def is_offloaded(self, sid: int) -> bool:
        return any(s.id == sid for s in self.slices)


def _blocks_motion(ins: Instr, s: OffloadSlice, regs: set[str], *, reads: bool) -> bool:
    if ins.op in _MOTION_BARRIERS:
        return True
    if regs & set(ins.dests):
        return True
    if reads and regs & set(ins.uses()):
        return True
    if ins.is_memory and ins.space != LOCAL:
        return ins.op == "store" or s.has_stores
    return False


def _rewrite_one(body: list[Instr], s: OffloadSlice, uid: int) -> list[Instr]:
    submit = Instr("submit_slice", args=tuple(s.live_ins), imm=s.id, uid=uid)
    wait = Instr("await_mailbox", dests=tuple(s.live_outs), imm=s.id, uid=uid + 1)
    if s.is_loop:
        h = next(i for i, ins in enumerate(body) if ins.op == "label" and ins.target == s.loop_label)
        j = next(i for i in range(h + 1, len(body))
                 if body[i].op == "branch" and body[i].target == s.loop_label)
        keep = set(s.residual)
        residual = [ins for ins in body[h + 1:j] if ins.uid in keep]
        loop = [body[h], *residual, body[j]] if residual else []
        body = body[:h] + [submit] + loop + [wait] + body[j + 1:]
    else:
        uids = s.uids
        pos = [i for i, ins in enumerate(body) if ins.uid in uids]
        first, last = pos[0], pos[-1]
        between = [ins for ins in body[first:last + 1] if ins.uid not in uids]
        body = body[:first] + [submit] + between + [wait] + body[last + 1:]

    # hoist the submit (with its anchor label) above independent instructions
    si = body.index(submit)
    start = si
    if si > 0 and body[si - 1].op == "profile_label" and body[si - 1].imm == s.anchor_label:
        start = si - 1
    head = body[start:si + 1]
    live_ins = set(s.live_ins)
    e = start
    while e > 0 and not _blocks_motion(body[e - 1], s, live_ins, reads=False):
        e -= 1
    body = body[:e] + head + body[e:start] + body[si + 1:]

    # sink the await below instructions that do not touch its live-outs
    wi = body.index(wait)
    live_outs = set(s.live_outs)
    w = wi
    while w + 1 < len(body) and not _blocks_motion(body[w + 1], s, live_outs, reads=True):
        w += 1
    body = body[:wi] + body[wi + 1:w + 1] + [wait] + body[w + 1:]
    return body


def overlap_regions(p: Program) -> dict[int, range]:
    out: dict[int, range] = {}
    for fn in p.functions:
        submits = {}
        for i, ins in enumerate(fn.body):
            if ins.op == "submit_slice":
                submits[ins.imm] = i
            elif ins.op == "await_mailbox" and ins.imm in submits:
                out[ins.imm] = range(submits[ins.imm] + 1, i)
    return out


def rewrite_with_offload(p: Program, slices) -> OffloadedProgram:
    """Rewrite every slice whose site is not the host.

    ``p`` may be labeled or not; anchors are (re)inserted idempotently.
    """
    source = insert_profile_labels(p, slices)
    offloaded = tuple(s for s in slices if s.site is None or s.site.kind != "host")
    inline = tuple(s for s in slices if s.site is not None and s.site.kind == "host")
    uid = source.next_uid()
    funcs = []
    for fn in source.functions:
        body = list(fn.body)
        for s in sorted((s for s in offloaded if s.function == fn.name), key=lambda s: s.id):
            body = _rewrite_one(body, s, uid)
            uid += 2
        funcs.append(Function(fn.name, fn.params, tuple(body)))
    program = Program(tuple(funcs), source.regions)
    return OffloadedProgram(program, offloaded, overlap_regions(program), source, inline)


# --- reference execution -----------------------------------------------------

def oracle_slice_runner(op: OffloadedProgram):
    """Slice runner for :func:`interpret` that executes each slice sequentially at submit."""
    progs = {s.id: (s, slice_as_program(s, op.program.regions)) for s in op.slices}

    def run(sid: int, values: list[int], memory: MemoryImage):
        s, prog = progs[sid]
        res = interpret(prog, memory, dict(zip(s.live_ins, values)))
        if res.trap is not None:
            return {}, [], Trap(res.trap.uid, s.function, res.trap.index, res.trap.address,
                                res.trap.reason)
        for addr, data in res.stores:
            memory.write(addr, int.from_bytes(data[:8], "little"), len(data))
        return {r: res.final_registers[r] for r in s.live_outs}, list(res.load_trace), None

    return run


def interpret_offloaded(op: OffloadedProgram, mem: MemoryImage, inputs=None, **kw) -> ArchResult:
    return interpret(op.program, mem, inputs, slice_runner=oracle_slice_runner(op), **kw)


def canonical_trace(trace: list[LoadRecord]) -> list[tuple[int, int, int]]:
    """Load records grouped per static load (stable within a load site)."""
    return [(r.uid, r.address, r.value) for r in sorted(trace, key=lambda r: r.uid)]


def hidden_registers(op: OffloadedProgram) -> set[str]:
    """Registers of ``main`` whose final value the rewrite legitimately drops."""
    out: set[str] = set()
    for s in op.slices:
        if s.function == "main":
            out |= set(s.defs) - set(s.live_outs)
    return out


def _nonzero(mem: MemoryImage | None) -> dict[int, bytes]:
    if mem is None:
        return {}
    return {a: v for a, v in mem.lines.items() if any(v)}


def equivalence_error(original: ArchResult, rewritten: ArchResult, op: OffloadedProgram) -> str | None:
    """First difference between two architectural results, or None."""
    a, b = canonical_trace(original.load_trace), canonical_trace(rewritten.load_trace)
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"load #{i} differs: uid {x[0]} addr {x[1]:#x} value {x[2]:#x} vs " \
                   f"uid {y[0]} addr {y[1]:#x} value {y[2]:#x}"
    if len(a) != len(b):
        return f"load trace length {len(a)} vs {len(b)}"
    if original.return_value != rewritten.return_value:
        return f"return value {original.return_value} vs {rewritten.return_value}"
    if (original.trap is None) != (rewritten.trap is None):
        return f"trap {original.trap} vs {rewritten.trap}"
    if _nonzero(original.final_memory) != _nonzero(rewritten.final_memory):
        return "final memory images differ"
    hidden = hidden_registers(op)
    for reg, val in original.final_registers.items():
        if reg in hidden:
            continue
        if rewritten.final_registers.get(reg) != val:
            return f"register {reg}: {val} vs {rewritten.final_registers.get(reg)}"
    return None
