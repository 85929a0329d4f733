from __future__ import annotations

from collections import defaultdict
from typing import Iterable

from ..ir.types import Function, Instr, Program


def anchor_position(body: list[Instr] | tuple[Instr, ...], s) -> int | None:
    """Index of the instruction a slice anchor sits in front of."""
    for i, ins in enumerate(body):
        if s.is_loop:
            if ins.op == "label" and ins.target == s.loop_label:
                return i
        elif ins.uid == s.instructions[0].uid:
            return i
    return None


def insert_profile_labels(p: Program, slices: Iterable = ()) -> Program:
    """Put ``profile_label`` at every function entry and in front of every slice.

    Function ``k`` (in declaration order) gets id ``k``; a slice gets its
    ``anchor_label``. Labels already present are left alone, so relabeling is
    idempotent.
    """
    uid = p.next_uid()
    by_fn = defaultdict(list)
    for s in slices:
        by_fn[s.function].append(s)
    funcs = []
    for k, fn in enumerate(p.functions):
        body = list(fn.body)
        if not (body and body[0].op == "profile_label" and body[0].imm == k):
            body.insert(0, Instr("profile_label", imm=k, uid=uid))
            uid += 1
        for s in by_fn.get(fn.name, ()):
            pos = anchor_position(body, s)
            if pos is None:
                continue
            prev = body[pos - 1] if pos > 0 else None
            if prev is not None and prev.op == "profile_label" and prev.imm == s.anchor_label:
                continue
            body.insert(pos, Instr("profile_label", imm=s.anchor_label, uid=uid))
            uid += 1
        funcs.append(Function(fn.name, fn.params, tuple(body)))
    return Program(tuple(funcs), p.regions)


def profile_label_ids(p: Program) -> list[int]:
    return [ins.imm for ins in p.instructions() if ins.op == "profile_label"]
