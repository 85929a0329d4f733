"""Forward pointer-provenance marking and interprocedural remote-pointer propagation.

Each register carries an abstract value: an optional known constant plus a set
of provenance tags. Tags are ``("S",)`` scalar, ``("P", space)`` a pointer
into a region, ``("D", space)`` data loaded from a region (dereferenced as a
pointer into that same space) and ``("U",)`` unknown. The empty set is bottom.
An access resolves to a single space when every tag agrees, else Unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

from ..ir.cfg import successors
from ..ir.types import (
    UNKNOWN, Function, Instr, Program, RegionDecl, Space, to_word,
)

SCALAR = ("S",)
TOP = ("U",)


@dataclass(frozen=True)
class RegionMap:
    entries: tuple[tuple[int, int, Space], ...]

    @classmethod
    def from_regions(cls, regions: Iterable[RegionDecl]) -> RegionMap:
        entries = tuple(sorted((r.base, r.end, r.space) for r in regions))
        for (_, end, _), (base, _, _) in zip(entries, entries[1:]):
            if base < end:
                raise ValueError("region map ranges overlap")
        return cls(entries)

    @classmethod
    def from_program(cls, p: Program) -> RegionMap:
        return cls.from_regions(p.regions)

    def lookup(self, addr: int) -> Space | None:
        for base, end, space in self.entries:
            if base <= addr < end:
                return space
        return None


@dataclass(frozen=True)
class AbsVal:
    const: int | None = None
    tags: frozenset = frozenset()

    @property
    def is_bottom(self) -> bool:
        return self.const is None and not self.tags


BOTTOM = AbsVal()
UNKNOWN_VAL = AbsVal(None, frozenset({TOP}))


class _Lattice:
    def __init__(self, rm: RegionMap):
        self.rm = rm

    def classify(self, c: int) -> tuple:
        space = self.rm.lookup(c)
        return ("P", space) if space is not None else SCALAR

    def tags(self, v: AbsVal) -> frozenset:
        if v.const is not None:
            return frozenset({self.classify(v.const)})
        return v.tags

    def join(self, a: AbsVal, b: AbsVal) -> AbsVal:
        if a.is_bottom:
            return b
        if b.is_bottom:
            return a
        if a.const is not None and a.const == b.const:
            return a
        return AbsVal(None, self.tags(a) | self.tags(b))

    def deref(self, v: AbsVal) -> Space:
        spaces = set()
        for tag in self.tags(v):
            if tag[0] in ("P", "D"):
                spaces.add(tag[1])
            else:
                return UNKNOWN
        if len(spaces) != 1:
            return UNKNOWN
        return spaces.pop()

    def _add_const(self, tag: tuple, c: int) -> tuple:
        if tag == TOP or tag[0] == "P":
            return tag
        cls = self.classify(c)
        return cls if cls[0] == "P" else tag

    @staticmethod
    def _add_tags(x: tuple, y: tuple) -> tuple:
        if x == TOP or y == TOP:
            return TOP
        if x[0] == "P" and y[0] == "P":
            return TOP
        if x[0] == "P":
            return x
        if y[0] == "P":
            return y
        if x[0] == "D" and y[0] == "D":
            return SCALAR
        if x[0] == "D":
            return x
        return y

    def add(self, a: AbsVal, b: AbsVal) -> AbsVal:
        if a.is_bottom or b.is_bottom:
            return BOTTOM
        if a.const is not None and b.const is not None:
            return AbsVal(to_word(a.const + b.const))
        if a.const is not None:
            a, b = b, a
        if b.const is not None:
            return AbsVal(None, frozenset(self._add_const(t, b.const) for t in a.tags))
        return AbsVal(None, frozenset(self._add_tags(x, y) for x in a.tags for y in b.tags))

    def opaque(self, a: AbsVal, b: AbsVal, fold) -> AbsVal:
        if a.is_bottom or b.is_bottom:
            return BOTTOM
        if a.const is not None and b.const is not None:
            return AbsVal(fold(a.const, b.const))
        if TOP in self.tags(a) or TOP in self.tags(b):
            return UNKNOWN_VAL
        return AbsVal(None, frozenset({SCALAR}))


def _operand(lat: _Lattice, env: dict[str, AbsVal], a) -> AbsVal:
    if isinstance(a, int):
        return AbsVal(to_word(a))
    return env.get(a, BOTTOM)


def _cmp_fold(pred):
    from ..ir.interp import compare
    return lambda x, y: compare(pred, x, y)


class _FunctionAnalysis:
    """Forward fixpoint over one function for fixed parameter and callee-return values."""

    def __init__(self, lat: _Lattice, fn: Function, params: dict[str, AbsVal],
                 returns: dict[str, AbsVal] | None):
        self.lat = lat
        self.fn = fn
        self.params = params
        self.returns = returns  # None: intraprocedural, call results unknown
        self.env_in: list[dict[str, AbsVal] | None] = [None] * len(fn.body)
        self.call_args: dict[str, list[AbsVal]] = {}
        self.ret_val = BOTTOM

    def transfer(self, ins: Instr, env: dict[str, AbsVal]) -> dict[str, AbsVal]:
        lat = self.lat
        out = dict(env)
        op = ins.op
        arg = lambda k: _operand(lat, env, ins.args[k])  # noqa: E731
        if op == "const":
            out[ins.dests[0]] = AbsVal(to_word(ins.args[0]))
        elif op == "add":
            out[ins.dests[0]] = lat.add(arg(0), arg(1))
        elif op == "mul":
            out[ins.dests[0]] = lat.opaque(arg(0), arg(1), lambda x, y: to_word(x * y))
        elif op == "cmp":
            out[ins.dests[0]] = lat.opaque(arg(0), arg(1), _cmp_fold(ins.target))
        elif op == "load":
            space = lat.deref(arg(0))
            out[ins.dests[0]] = (AbsVal(None, frozenset({("D", space)}))
                                 if space != UNKNOWN else UNKNOWN_VAL)
        elif op == "call":
            if ins.dests:
                if self.returns is None:
                    out[ins.dests[0]] = UNKNOWN_VAL
                else:
                    out[ins.dests[0]] = self.returns.get(ins.target, BOTTOM)
        elif op == "await_mailbox":
            for d in ins.dests:
                out[d] = UNKNOWN_VAL
        return out

    def run(self) -> None:
        fn, lat = self.fn, self.lat
        if not fn.body:
            return
        labels = fn.labels
        entry = dict(self.params)
        self.env_in[0] = entry
        work = [0]
        while work:
            i = work.pop()
            env = self.env_in[i]
            out = self.transfer(fn.body[i], env)
            for s in successors(fn, i, labels):
                cur = self.env_in[s]
                merged = dict(out) if cur is None else _join_env(lat, cur, out)
                if merged != cur:
                    self.env_in[s] = merged
                    work.append(s)
        for i, ins in enumerate(fn.body):
            env = self.env_in[i]
            if env is None:
                continue
            if ins.op == "call":
                vals = [_operand(lat, env, a) for a in ins.args]
                prev = self.call_args.get(ins.target)
                self.call_args[ins.target] = (vals if prev is None else
                                              [lat.join(x, y) for x, y in zip(prev, vals)])
            elif ins.op == "ret" and ins.args:
                self.ret_val = lat.join(self.ret_val, _operand(lat, env, ins.args[0]))

    def annotate(self) -> Function:
        body = []
        for i, ins in enumerate(self.fn.body):
            if ins.is_memory:
                env = self.env_in[i]
                space = UNKNOWN if env is None else self.lat.deref(_operand(self.lat, env, ins.args[0]))
                ins = replace(ins, space=space)
            body.append(ins)
        return replace(self.fn, body=tuple(body))


def _join_env(lat: _Lattice, a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = lat.join(out[k], v) if k in out else v
    return out


def mark_remotable(p: Program, rm: RegionMap | None = None) -> Program:
    """Annotate every load/store Local, Remote(e) or Unknown (intraprocedural).

    Parameters and call results are treated as unknown pointers; use
    :func:`propagate_remote_pointers` to refine them across calls.
    """
    lat = _Lattice(rm or RegionMap.from_program(p))
    funcs = []
    for fn in p.functions:
        fa = _FunctionAnalysis(lat, fn, {q: UNKNOWN_VAL for q in fn.params}, None)
        fa.run()
        funcs.append(fa.annotate())
    return replace(p, functions=tuple(funcs))


def _interprocedural(p: Program, lat: _Lattice) -> dict[str, _FunctionAnalysis]:
    params: dict[str, dict[str, AbsVal]] = {
        fn.name: {q: (UNKNOWN_VAL if fn.name == "main" else BOTTOM) for q in fn.params}
        for fn in p.functions
    }
    returns: dict[str, AbsVal] = {fn.name: BOTTOM for fn in p.functions}
    while True:
        results = {}
        for fn in p.functions:
            fa = _FunctionAnalysis(lat, fn, params[fn.name], returns)
            fa.run()
            results[fn.name] = fa
        changed = False
        new_params = {name: dict(v) for name, v in params.items()}
        for fa in results.values():
            for callee, vals in fa.call_args.items():
                callee_fn = p.function(callee)
                for q, v in zip(callee_fn.params, vals):
                    joined = lat.join(new_params[callee][q], v)
                    if joined != new_params[callee][q]:
                        new_params[callee][q] = joined
                        changed = True
        for name, fa in results.items():
            joined = lat.join(returns[name], fa.ret_val)
            if joined != returns[name]:
                returns[name] = joined
                changed = True
        params = new_params
        if not changed:
            return results


def propagate_remote_pointers(p: Program, rm: RegionMap | None = None) -> tuple[Program, frozenset[str]]:
    """Interprocedural may-analysis of remote pointers passed through calls.

    Returns the re-annotated program and the set of functions that receive a
    remote pointer through some parameter (recursion handled by fixpoint).
    """
    lat = _Lattice(rm or RegionMap.from_program(p))
    results = _interprocedural(p, lat)
    remote_fns = set()
    for fn in p.functions:
        for v in results[fn.name].params.values():
            if any(t[0] in ("P", "D") and t[1].is_remote for t in lat.tags(v)):
                remote_fns.add(fn.name)
    funcs = tuple(results[fn.name].annotate() for fn in p.functions)
    return replace(p, functions=funcs), frozenset(remote_fns)


def constant_values(p: Program, fn_name: str, rm: RegionMap | None = None) -> list[dict[str, int]]:
    """Known constant register values before each instruction of ``fn_name``."""
    lat = _Lattice(rm or RegionMap.from_program(p))
    fn = p.function(fn_name)
    fa = _FunctionAnalysis(lat, fn, {q: UNKNOWN_VAL for q in fn.params}, None)
    fa.run()
    out = []
    for env in fa.env_in:
        out.append({} if env is None else {k: v.const for k, v in env.items() if v.const is not None})
    return out


__all__ = [
    "AbsVal", "RegionMap", "constant_values", "mark_remotable", "propagate_remote_pointers",
]
