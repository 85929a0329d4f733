from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .memory import MemoryFault, MemoryImage
from .types import Instr, Program, to_signed, to_word

DEFAULT_STEP_BUDGET = 10**8


class StepBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadRecord:
    uid: int
    address: int
    value: int


@dataclass(frozen=True)
class Trap:
    uid: int
    function: str
    index: int
    address: int
    reason: str


@dataclass
class ArchResult:
    load_trace: list[LoadRecord] = field(default_factory=list)
    final_registers: dict[str, int] = field(default_factory=dict)
    stores: list[tuple[int, bytes]] = field(default_factory=list)
    return_value: int | None = None
    trap: Trap | None = None
    steps: int = 0
    final_memory: MemoryImage | None = field(default=None, compare=False, repr=False)


def value_of(regs: Mapping[str, int], a) -> int:
    return to_word(a) if isinstance(a, int) else regs[a]


def compare(pred: str, a: int, b: int) -> int:
    a, b = to_signed(a), to_signed(b)
    return int({
        "eq": a == b, "ne": a != b, "lt": a < b,
        "le": a <= b, "gt": a > b, "ge": a >= b,
    }[pred])


def eval_arith(ins: Instr, regs: Mapping[str, int]) -> int:
    if ins.op == "const":
        return to_word(ins.args[0])
    a = value_of(regs, ins.args[0])
    b = value_of(regs, ins.args[1])
    if ins.op == "add":
        return to_word(a + b)
    if ins.op == "mul":
        return to_word(a * b)
    return compare(ins.target, a, b)


# (slice id, live-in values, memory) -> (live-out values, load records, trap or None)
SliceRunner = Callable[[int, list[int], MemoryImage], tuple[dict[str, int], list[LoadRecord], "Trap | None"]]


def interpret(p: Program, mem: MemoryImage, inputs: Mapping[str, int] | None = None, *,
              step_budget: int = DEFAULT_STEP_BUDGET,
              slice_runner: SliceRunner | None = None) -> ArchResult:
    """Execute ``main`` sequentially with unbounded resources.

    ``mem`` is not modified. Programs containing submit_slice/await_mailbox
    need a ``slice_runner`` that executes a slice at its submit point.
    """
    memory = mem.copy()
    result = ArchResult()
    if not p.functions:
        return result
    funcs = {fn.name: fn for fn in p.functions}
    labels = {fn.name: fn.labels for fn in p.functions}
    main = funcs["main"]
    regs = {name: to_word((inputs or {}).get(name, 0)) for name in main.params}
    # each frame: function, pc, registers, destination in caller
    stack: list[tuple] = []
    fn, pc = main, 0
    pending: dict[int, tuple[dict[str, int], list[LoadRecord]]] = {}
    steps = 0

    while True:
        if pc >= len(fn.body):
            ins = None
        else:
            ins = fn.body[pc]
            steps += 1
            if steps > step_budget:
                raise StepBudgetExceeded(f"step budget {step_budget} exceeded in {fn.name}")
        if ins is None or ins.op == "ret":
            ret_val = None
            if ins is not None and ins.args:
                ret_val = value_of(regs, ins.args[0])
            if not stack:
                result.return_value = ret_val
                break
            fn, pc, regs, dest = stack.pop()
            if dest is not None:
                regs[dest] = ret_val if ret_val is not None else 0
            pc += 1
            continue

        op = ins.op
        try:
            if op in ("const", "add", "mul", "cmp"):
                regs[ins.dests[0]] = eval_arith(ins, regs)
            elif op == "load":
                addr = value_of(regs, ins.args[0])
                val = memory.read(addr, ins.size)
                regs[ins.dests[0]] = val
                result.load_trace.append(LoadRecord(ins.uid, addr, val))
            elif op == "store":
                addr = value_of(regs, ins.args[0])
                data = memory.write(addr, value_of(regs, ins.args[1]), ins.size)
                result.stores.append((addr, data))
            elif op == "branch":
                if value_of(regs, ins.args[0]) != 0:
                    pc = labels[fn.name][ins.target]
                    continue
            elif op == "jump":
                pc = labels[fn.name][ins.target]
                continue
            elif op == "call":
                callee = funcs[ins.target]
                args = [value_of(regs, a) for a in ins.args]
                stack.append((fn, pc, regs, ins.dests[0] if ins.dests else None))
                fn, pc, regs = callee, 0, dict(zip(callee.params, args))
                continue
            elif op == "submit_slice":
                if slice_runner is None:
                    raise ValueError("submit_slice requires a slice runner")
                outs, loads, trap = slice_runner(ins.imm, [value_of(regs, a) for a in ins.args], memory)
                if trap is not None:
                    result.trap = trap
                    break
                pending[ins.imm] = (outs, loads)
            elif op == "await_mailbox":
                outs, loads = pending.pop(ins.imm)
                for reg in ins.dests:
                    regs[reg] = outs[reg]
                result.load_trace.extend(loads)
        except MemoryFault as fault:
            result.trap = Trap(ins.uid, fn.name, pc, fault.address, fault.reason)
            break
        pc += 1

    result.final_registers = dict(regs) if not stack else result.final_registers
    if result.trap is not None and stack:
        # trap inside a callee: report main's registers
        result.final_registers = dict(stack[0][2])
    result.steps = steps
    result.final_memory = memory
    return result
