from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

LINE = 64
WORD_MASK = (1 << 64) - 1

Operand = Union[str, int]

OPCODES = frozenset({
    "const", "add", "mul", "cmp", "load", "store", "branch", "jump", "call",
    "ret", "label", "profile_label", "submit_slice", "await_mailbox",
})
CMP_PREDICATES = ("eq", "ne", "lt", "le", "gt", "ge")
ARITH = frozenset({"const", "add", "mul", "cmp"})
CONTROL = frozenset({"branch", "jump", "ret", "label", "call"})
PSEUDO = frozenset({"label", "profile_label"})


@dataclass(frozen=True, order=True)
class Space:
    """Address space of a memory access: ``local``, ``remote`` (with endpoint) or ``unknown``."""

    kind: str
    endpoint: int | None = None

    def __str__(self) -> str:
        if self.kind == "remote":
            return f"remote({self.endpoint})"
        return self.kind

    @property
    def is_remote(self) -> bool:
        return self.kind == "remote"


LOCAL = Space("local")
UNKNOWN = Space("unknown")


def remote(endpoint: int) -> Space:
    return Space("remote", endpoint)


def to_word(value: int) -> int:
    return value & WORD_MASK


def to_signed(value: int) -> int:
    value &= WORD_MASK
    return value - (1 << 64) if value >> 63 else value


@dataclass(frozen=True)
class RegionDecl:
    name: str
    base: int
    length: int
    space: Space

    @property
    def end(self) -> int:
        return self.base + self.length

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.end


@dataclass(frozen=True)
class Instr:
    """One mini-IR instruction.

    ``target`` carries the label of branch/jump/label, the callee of a call and
    the predicate of a cmp. ``imm`` carries profile-label and slice ids.
    ``uid`` identifies the instruction across rewrites and is ignored by ``==``.
    """

    op: str
    dests: tuple[str, ...] = ()
    args: tuple[Operand, ...] = ()
    target: str | None = None
    imm: int | None = None
    size: int = 0
    space: Space | None = None
    uid: int = field(default=-1, compare=False)

    def uses(self) -> tuple[str, ...]:
        return tuple(a for a in self.args if isinstance(a, str))

    def with_space(self, space: Space | None) -> Instr:
        return replace(self, space=space)

    @property
    def is_memory(self) -> bool:
        return self.op in ("load", "store")


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[str, ...]
    body: tuple[Instr, ...]

    @property
    def labels(self) -> dict[str, int]:
        return {ins.target: i for i, ins in enumerate(self.body) if ins.op == "label"}


@dataclass(frozen=True)
class Program:
    functions: tuple[Function, ...] = ()
    regions: tuple[RegionDecl, ...] = ()

    def function(self, name: str) -> Function:
        for fn in self.functions:
            if fn.name == name:
                return fn
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(fn.name == name for fn in self.functions)

    def region_of(self, addr: int) -> RegionDecl | None:
        for region in self.regions:
            if region.contains(addr):
                return region
        return None

    def replace_function(self, fn: Function) -> Program:
        funcs = tuple(fn if f.name == fn.name else f for f in self.functions)
        return replace(self, functions=funcs)

    def instructions(self):
        for fn in self.functions:
            yield from fn.body

    def next_uid(self) -> int:
        return max((ins.uid for ins in self.instructions()), default=-1) + 1


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return where + self.message


class ParseError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))
