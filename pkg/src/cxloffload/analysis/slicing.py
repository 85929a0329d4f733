"""Extraction of offloadable load slices.

Two shapes are sliced:

* simple loops (a label, a straight-line body and one back branch): the slice
  is the loop restricted to its remote loads, their address computations and
  the loop control; the rest of the body stays on the host as a residual loop
  that runs concurrently (loop fission);
* straight-line blocks: each chain of dependent remote loads with the
  arithmetic feeding their addresses.

Slices never span calls. Accesses annotated Unknown are never sliced.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable

from ..ir.cfg import liveness, predecessors
from ..ir.interp import eval_arith
from ..ir.types import ARITH, LOCAL, Function, Instr, Program
from .cost import Site
from .remotable import constant_values

DEFAULT_MAX_SLICE = 64
TRIP_EVAL_CAP = 1_000_000
_BARRIERS = frozenset({"label", "branch", "jump", "ret", "call", "submit_slice", "await_mailbox"})


@dataclass(frozen=True)
class OffloadSlice:
    id: int
    function: str
    instructions: tuple[Instr, ...]
    live_ins: tuple[str, ...]
    live_outs: tuple[str, ...]
    touched_endpoints: frozenset[int]
    anchor_label: int
    loop_label: str | None = None
    loop_cond: str | None = None
    residual: tuple[int, ...] = ()
    trip_estimate: int = 1
    site: Site | None = None
    est_window: float = 0.0

    @property
    def is_loop(self) -> bool:
        return self.loop_label is not None

    @property
    def has_stores(self) -> bool:
        return any(ins.op == "store" for ins in self.instructions)

    @property
    def uids(self) -> frozenset[int]:
        return frozenset(ins.uid for ins in self.instructions)

    @property
    def defs(self) -> frozenset[str]:
        return frozenset(d for ins in self.instructions for d in ins.dests)

    def with_site(self, site: Site, est_window: float) -> OffloadSlice:
        return replace(self, site=site, est_window=est_window)


def near_legal(ins: Instr) -> bool:
    """Whether the near core may execute ``ins``."""
    if ins.op in ARITH:
        return True
    if ins.is_memory:
        return ins.space is not None and ins.space.is_remote
    return False


def _is_remote_load(ins: Instr) -> bool:
    return ins.op == "load" and ins.space is not None and ins.space.is_remote


def _simple_loops(fn: Function) -> list[tuple[int, int]]:
    labels = fn.labels
    preds = predecessors(fn)
    loops = []
    for j, ins in enumerate(fn.body):
        if ins.op != "branch" or not isinstance(ins.args[0], str):
            continue
        h = labels[ins.target]
        if h >= j:
            continue
        body = fn.body[h + 1:j]
        if any(b.op in _BARRIERS or b.op == "profile_label" for b in body):
            continue
        if h > 0 and fn.body[h - 1].op in ("jump", "ret"):
            continue
        if set(preds[h]) != ({h - 1, j} if h > 0 else {j}):
            continue
        loops.append((h, j))
    return loops


def _entry_constants(fn: Function, h: int, consts: list[dict[str, int]]) -> dict[str, int]:
    if h == 0:
        return {}
    env = dict(consts[h - 1])
    ins = fn.body[h - 1]
    if ins.op in ARITH and all(isinstance(a, int) or a in env for a in ins.args):
        env[ins.dests[0]] = eval_arith(ins, env)
    else:
        for d in ins.dests:
            env.pop(d, None)
    return env


def _trip_count(lc: list[Instr], cond: str, env: dict[str, int]) -> int | None:
    regs = dict(env)
    for ins in lc:
        if ins.op not in ARITH:
            return None
    trips = 0
    while trips < TRIP_EVAL_CAP:
        for ins in lc:
            if any(isinstance(a, str) and a not in regs for a in ins.args):
                return None
            regs[ins.dests[0]] = eval_arith(ins, regs)
        trips += 1
        if cond not in regs:
            return None
        if regs[cond] == 0:
            return trips
    return None


def _upward_exposed(instrs: Iterable[Instr]) -> list[str]:
    defined: set[str] = set()
    out: list[str] = []
    for ins in instrs:
        for u in ins.uses():
            if u not in defined and u not in out:
                out.append(u)
        defined.update(ins.dests)
    return out


def _ordered_defs(instrs: Iterable[Instr]) -> list[str]:
    out: list[str] = []
    for ins in instrs:
        for d in ins.dests:
            if d not in out:
                out.append(d)
    return out


def _loop_candidate(fn: Function, h: int, j: int, live: list[set[str]],
                    consts: list[dict[str, int]], max_len: int) -> dict | None:
    body_idx = list(range(h + 1, j))
    cond = fn.body[j].args[0]
    ins_at = fn.body
    defs: dict[str, list[int]] = defaultdict(list)
    for k in body_idx:
        for d in ins_at[k].dests:
            defs[d].append(k)

    def closure(seed: Iterable[int]) -> set[int]:
        out = set(seed)
        todo = list(out)
        while todo:
            k = todo.pop()
            for u in ins_at[k].uses():
                for d in defs.get(u, ()):
                    if d not in out:
                        out.add(d)
                        todo.append(d)
        return out

    seeds = [k for k in body_idx if _is_remote_load(ins_at[k])]
    if not seeds:
        return None
    lc = closure(defs.get(cond, ()))
    lc_pure = all(ins_at[k].op in ARITH for k in lc)
    s = closure(set(seeds) | lc)
    while True:
        rest = [k for k in body_idx if k not in s]
        if rest and not lc_pure:
            s = closure(s | set(rest))
            continue
        has_store = any(ins_at[k].op == "store" for k in s)
        s_defs = {d for k in s - lc for d in ins_at[k].dests}
        grow = None
        for r in rest:
            ins = ins_at[r]
            needs = any(d in s and d not in lc for u in ins.uses() for d in defs.get(u, ()))
            clobbers = bool(set(ins.dests) & s_defs)
            conflict = ins.is_memory and ins.space != LOCAL and (ins.op == "store" or has_store)
            if needs or clobbers or conflict:
                grow = r
                break
        if grow is None:
            break
        s = closure(s | {grow})
    if not all(near_legal(ins_at[k]) for k in s) or len(s) > max_len:
        return None
    rest = [k for k in body_idx if k not in s]
    residual = sorted(set(rest) | (lc if rest else set()))
    members = [ins_at[k] for k in sorted(s)]
    live_ins = _upward_exposed(members)
    if cond not in {d for m in members for d in m.dests} and cond not in live_ins:
        live_ins.append(cond)
    exit_live = live[j + 1] if j + 1 < len(fn.body) else set()
    residual_defs = {d for k in residual for d in ins_at[k].dests}
    live_outs = [d for d in _ordered_defs(members) if d in exit_live and d not in residual_defs]
    trips = None
    if lc_pure:
        trips = _trip_count([ins_at[k] for k in sorted(lc)], cond, _entry_constants(fn, h, consts))
    return {
        "members": members,
        "live_ins": tuple(live_ins),
        "live_outs": tuple(live_outs),
        "loop_label": fn.body[h].target,
        "loop_cond": cond,
        "residual": tuple(ins_at[k].uid for k in residual),
        "trip_estimate": trips or 1,
        "first": h,
    }


def _runs(fn: Function, excluded: set[int]) -> list[list[int]]:
    runs: list[list[int]] = []
    cur: list[int] = []
    for k, ins in enumerate(fn.body):
        if ins.op in _BARRIERS or k in excluded:
            if cur:
                runs.append(cur)
            cur = []
        else:
            cur.append(k)
    if cur:
        runs.append(cur)
    return runs


def _block_candidates(fn: Function, run: list[int], live: list[set[str]],
                      batching: bool, max_len: int) -> list[dict]:
    body = fn.body
    last_def: dict[str, int] = {}
    reach: dict[tuple[int, str], int | None] = {}
    for k in run:
        for u in body[k].uses():
            reach[(k, u)] = last_def.get(u)
        for d in body[k].dests:
            last_def[d] = k

    def closure(seed: int) -> set[int]:
        out = {seed}
        todo = [seed]
        while todo:
            k = todo.pop()
            for u in body[k].uses():
                d = reach.get((k, u))
                if d is not None and d not in out and near_legal(body[d]) and body[d].op != "const":
                    out.add(d)
                    todo.append(d)
        return out

    seeds = [k for k in run if _is_remote_load(body[k])]
    if not seeds:
        return []
    closures = {k: closure(k) for k in seeds}
    # union seeds whose closures share instructions
    chains: list[set[int]] = []
    for k in seeds:
        merged = set(closures[k])
        keep = []
        for c in chains:
            if c & merged:
                merged |= c
            else:
                keep.append(c)
        chains = keep + [merged]
    chains.sort(key=min)

    groups: list[list[int]] = []
    for c in chains:
        if batching and groups and len(groups[-1]) + len(c) <= max_len:
            groups[-1] = sorted(set(groups[-1]) | c)
        else:
            groups.append(sorted(c))

    def legalize(group: list[int]) -> list[list[int]]:
        if not group:
            return []
        if len(group) > max_len:
            out = []
            for i in range(0, len(group), max_len):
                out += legalize(group[i:i + max_len])
            return out
        members = set(group)
        member_defs = {d for k in group for d in body[k].dests}
        for x in range(group[0], group[-1] + 1):
            if x in members or body[x].op == "profile_label":
                continue
            ins = body[x]
            later_uses = {u for k in group if k > x for u in body[k].uses()}
            conflict = (
                any(reach.get((x, u)) in members for u in ins.uses())
                or any(d in member_defs or d in later_uses for d in ins.dests)
                or (ins.op == "store" and ins.space != LOCAL)
            )
            if conflict:
                return legalize([k for k in group if k < x]) + legalize([k for k in group if k > x])
        return [group]

    out = []
    for g in groups:
        for part in legalize(g):
            if not any(_is_remote_load(body[k]) for k in part):
                continue
            members = [body[k] for k in part]
            after = live[part[-1] + 1] if part[-1] + 1 < len(body) else set()
            out.append({
                "members": members,
                "live_ins": tuple(_upward_exposed(members)),
                "live_outs": tuple(d for d in _ordered_defs(members) if d in after),
                "first": part[0],
            })
    return out


def extract_slices(p: Program, *, batching: bool = True,
                   max_slice_len: int = DEFAULT_MAX_SLICE) -> list[OffloadSlice]:
    """Collect offload slices from a program annotated by ``mark_remotable``."""
    for ins in p.instructions():
        if ins.is_memory and ins.space is None:
            raise ValueError("extract_slices needs an annotated program (run mark_remotable first)")
    found: list[tuple[str, dict]] = []
    for fn in p.functions:
        if not fn.body:
            continue
        live = liveness(fn)
        consts = constant_values(p, fn.name)
        in_loops: set[int] = set()
        cands = []
        for h, j in _simple_loops(fn):
            cand = _loop_candidate(fn, h, j, live, consts, max_slice_len)
            if cand is not None:
                cands.append(cand)
                in_loops.update(range(h, j + 1))
        for run in _runs(fn, in_loops):
            cands.extend(_block_candidates(fn, run, live, batching, max_slice_len))
        cands.sort(key=lambda c: c["first"])
        found.extend((fn.name, c) for c in cands)

    slices = []
    for sid, (fname, c) in enumerate(found):
        members = tuple(c["members"])
        slices.append(OffloadSlice(
            id=sid,
            function=fname,
            instructions=members,
            live_ins=c["live_ins"],
            live_outs=c["live_outs"],
            touched_endpoints=frozenset(m.space.endpoint for m in members if m.is_memory),
            anchor_label=len(p.functions) + sid,
            loop_label=c.get("loop_label"),
            loop_cond=c.get("loop_cond"),
            residual=c.get("residual", ()),
            trip_estimate=c.get("trip_estimate", 1),
        ))
    return slices


def slice_as_program(s: OffloadSlice, regions) -> Program:
    """Standalone program running the slice: ``main(live_ins)`` returning after the slice."""
    body = list(s.instructions)
    if s.is_loop:
        body = [Instr("label", target=s.loop_label)] + body + [
            Instr("branch", args=(s.loop_cond,), target=s.loop_label)]
    return Program((Function("main", tuple(s.live_ins), tuple(body)),), tuple(regions))
