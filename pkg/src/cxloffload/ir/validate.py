from __future__ import annotations

from collections import Counter

from .cfg import successors
from .types import LINE, Diagnostic, Function, Program


def validate(p: Program) -> list[Diagnostic]:
    """Check every Program/Function invariant; an empty list means well-formed."""
    diags: list[Diagnostic] = []
    add = lambda msg: diags.append(Diagnostic(None, msg))  # noqa: E731

    names = Counter(fn.name for fn in p.functions)
    for name, count in names.items():
        if count > 1:
            add(f"duplicate function {name}")
    if p.functions and names.get("main", 0) != 1:
        add("program must define exactly one function named main")

    regions = sorted(p.regions, key=lambda r: r.base)
    for r in regions:
        if r.base % LINE or r.length % LINE:
            add(f"unaligned region {r.name}")
        if r.length <= 0:
            add(f"empty region {r.name}")
    for a, b in zip(regions, regions[1:]):
        if b.base < a.end:
            add(f"region overlap between {a.name} and {b.name}")

    profile_ids = Counter(ins.imm for ins in p.instructions() if ins.op == "profile_label")
    for pid, count in profile_ids.items():
        if count > 1:
            add(f"duplicate profile label {pid}")

    submits = Counter(ins.imm for ins in p.instructions() if ins.op == "submit_slice")
    awaits = Counter(ins.imm for ins in p.instructions() if ins.op == "await_mailbox")
    for sid in sorted(set(submits) | set(awaits)):
        if submits[sid] != 1 or awaits[sid] != 1:
            add(f"slice {sid} needs exactly one submit_slice and one await_mailbox")

    arity = {fn.name: len(fn.params) for fn in p.functions}
    for fn in p.functions:
        diags.extend(_check_function(p, fn, arity))
    return diags


def _check_function(p: Program, fn: Function, arity: dict[str, int]) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    where = f"in {fn.name}"
    labels = Counter(ins.target for ins in fn.body if ins.op == "label")
    for lab, count in labels.items():
        if count > 1:
            diags.append(Diagnostic(None, f"duplicate label {lab} {where}"))
    broken = False
    for i, ins in enumerate(fn.body):
        if ins.op in ("branch", "jump") and ins.target not in labels:
            diags.append(Diagnostic(None, f"undefined label {ins.target} {where}"))
            broken = True
        if ins.op == "call":
            if ins.target not in arity:
                diags.append(Diagnostic(None, f"call to undefined function {ins.target} {where}"))
            elif arity[ins.target] != len(ins.args):
                diags.append(Diagnostic(None, f"call to {ins.target} passes {len(ins.args)} "
                                              f"arguments, expected {arity[ins.target]} {where}"))
        if ins.is_memory:
            if not 0 < ins.size <= LINE:
                diags.append(Diagnostic(None, f"access size {ins.size} at {fn.name}[{i}]"))
            elif isinstance(ins.args[0], int):
                addr = ins.args[0]
                region = p.region_of(addr)
                if region is None or addr + ins.size > region.end:
                    diags.append(Diagnostic(None, f"access outside regions at {fn.name}[{i}]"))
                elif addr % LINE + ins.size > LINE:
                    diags.append(Diagnostic(None, f"access straddles a line at {fn.name}[{i}]"))
    if broken:
        return diags
    diags.extend(_check_definite_assignment(fn))
    return diags


def _check_definite_assignment(fn: Function) -> list[Diagnostic]:
    n = len(fn.body)
    if n == 0:
        return []
    labels = fn.labels
    defined_in: list[set[str] | None] = [None] * n
    defined_in[0] = set(fn.params)
    work = [0]
    while work:
        i = work.pop()
        out = defined_in[i] | set(fn.body[i].dests)
        for s in successors(fn, i, labels):
            if s == 0:
                continue  # entry always holds exactly the params
            cur = defined_in[s]
            new = set(out) if cur is None else cur & out
            if cur is None or new != cur:
                defined_in[s] = new
                work.append(s)
    diags = []
    for i, ins in enumerate(fn.body):
        have = defined_in[i]
        if have is None:
            continue
        for reg in ins.uses():
            if reg not in have:
                diags.append(Diagnostic(None, f"register {reg} may be used before assignment "
                                              f"at {fn.name}[{i}]"))
    return diags
