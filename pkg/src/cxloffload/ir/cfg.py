from __future__ import annotations

from .types import Function


def successors(fn: Function, i: int, labels: dict[str, int] | None = None) -> list[int]:
    labels = fn.labels if labels is None else labels
    ins = fn.body[i]
    nxt = [i + 1] if i + 1 < len(fn.body) else []
    if ins.op == "branch":
        return [labels[ins.target]] + [n for n in nxt if n != labels[ins.target]]
    if ins.op == "jump":
        return [labels[ins.target]]
    if ins.op == "ret":
        return []
    return nxt


def predecessors(fn: Function) -> list[list[int]]:
    labels = fn.labels
    preds: list[list[int]] = [[] for _ in fn.body]
    for i in range(len(fn.body)):
        for s in successors(fn, i, labels):
            preds[s].append(i)
    return preds


def liveness(fn: Function) -> list[set[str]]:
    """Registers live immediately *before* each instruction (index len = function exit)."""
    labels = fn.labels
    n = len(fn.body)
    live_in: list[set[str]] = [set() for _ in range(n + 1)]
    changed = True
    while changed:
        changed = False
        for i in range(n - 1, -1, -1):
            ins = fn.body[i]
            out: set[str] = set()
            for s in successors(fn, i, labels):
                out |= live_in[s]
            new = (out - set(ins.dests)) | set(ins.uses())
            if new != live_in[i]:
                live_in[i] = new
                changed = True
    return live_in


def live_after(fn: Function, i: int, live: list[set[str]] | None = None) -> set[str]:
    live = liveness(fn) if live is None else live
    out: set[str] = set()
    for s in successors(fn, i):
        out |= live[s]
    return out
