"""Deterministic workload generators and address-trace replay.

Every generator returns a ``(Program, MemoryImage)`` pair whose hot loop is a
single-block counted loop over data placed in one or more regions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .ir.memory import MemoryImage
from .ir.text import parse_program
from .ir.types import LINE, LOCAL, Diagnostic, ParseError, Program, RegionDecl, Space, remote

KINDS = ("PointerChase", "Strided", "HashProbe", "IndirectGather")
DATA_BASE = 0x10000


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "PointerChase"
    n: int = 1024
    stride: int = 64
    seed: int = 1
    space: Space = field(default_factory=lambda: remote(2))
    work_per_element: int = 4
    capacity: int | None = None     # bytes available per region; None sizes regions to fit

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise WorkloadError(f"unknown workload kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise WorkloadError("n must be >= 1")
        if self.stride <= 0 or self.stride % 8:
            raise WorkloadError("stride must be a positive multiple of 8")
        if self.work_per_element < 0:
            raise WorkloadError("work_per_element must be >= 0")
        if self.space.kind == "unknown":
            raise WorkloadError("workload space must be local or remote")


def _round_up(x: int) -> int:
    return -(-x // LINE) * LINE


def _region_text(name: str, base: int, length: int, space: Space) -> str:
    where = "local" if space == LOCAL else f"remote {space.endpoint}"
    return f"region {name} {base:#x} {length} {where}"


class _Layout:
    def __init__(self, spec: WorkloadSpec):
        self.spec = spec
        self.next = DATA_BASE
        self.regions: list[RegionDecl] = []
        self.lines: list[str] = []

    def region(self, name: str, needed: int) -> int:
        length = _round_up(max(needed, 1))
        cap = self.spec.capacity
        if cap is not None:
            if needed > cap:
                raise WorkloadError(f"region {name} needs {needed} bytes but capacity is {cap}")
            length = _round_up(cap)
        base = self.next
        self.next = base + length + 16 * LINE     # guard gap between regions
        self.regions.append(RegionDecl(name, base, length, self.spec.space))
        self.lines.append(_region_text(name, base, length, self.spec.space))
        return base


def _work_init(k: int) -> list[str]:
    return [f"  w{i} = const 0" for i in range(k)]


def _work_body(k: int) -> list[str]:
    return [f"  w{i} = add w{i}, {i + 1}" for i in range(k)]


def _program(layout: _Layout, init: list[str], body: list[str], result: str, k: int) -> Program:
    lines = layout.lines + ["fn main() {"] + init + _work_init(k) + ["L:"] + body[:-2] + \
        _work_body(k) + body[-2:] + [f"  ret {result}", "}"]
    return parse_program("\n".join(lines) + "\n")


def _pointer_chase(spec: WorkloadSpec, rng: random.Random):
    lay = _Layout(spec)
    base = lay.region("chase", spec.n * LINE)
    order = list(range(spec.n))
    rng.shuffle(order)                       # Fisher-Yates
    img = {}
    for i, node in enumerate(order):         # join into a single cycle
        img[base + node * LINE] = base + order[(i + 1) % spec.n] * LINE
    init = [f"  p = const {base + order[0] * LINE:#x}", f"  n = const {spec.n}"]
    body = ["  p = load p, 8", "  n = add n, -1", "  branch n, L"]
    return lay, init, body, "p", img


def _strided(spec: WorkloadSpec, rng: random.Random):
    lay = _Layout(spec)
    base = lay.region("array", (spec.n - 1) * spec.stride + 8)
    img = {base + i * spec.stride: rng.getrandbits(32) for i in range(spec.n)}
    init = [f"  a = const {base:#x}", "  s = const 0", f"  n = const {spec.n}"]
    body = ["  v = load a, 8", "  s = add s, v", f"  a = add a, {spec.stride}",
            "  n = add n, -1", "  branch n, L"]
    return lay, init, body, "s", img


def _indirect_gather(spec: WorkloadSpec, rng: random.Random):
    lay = _Layout(spec)
    ibase = lay.region("index", 8 * spec.n)
    dbase = lay.region("data", 8 * spec.n)
    img = {}
    for i in range(spec.n):
        img[ibase + 8 * i] = rng.randrange(spec.n)
        img[dbase + 8 * i] = rng.getrandbits(32)
    init = [f"  ip = const {ibase:#x}", f"  db = const {dbase:#x}", "  s = const 0",
            f"  n = const {spec.n}"]
    body = ["  i = load ip, 8", "  d = mul i, 8", "  d = add d, db", "  v = load d, 8",
            "  s = add s, v", "  ip = add ip, 8", "  n = add n, -1", "  branch n, L"]
    return lay, init, body, "s", img


def _hash_probe(spec: WorkloadSpec, rng: random.Random):
    """Linear-probing lookups of every inserted key, written without inner branches.

    Each iteration probes one table slot. A hit advances to the next query
    record (home offset, key) and jumps to its home slot; a miss moves to the
    next slot. ``rem`` counts the lookups still outstanding.
    """
    n = spec.n
    slots = 2 * n
    keys = []
    seen = set()
    while len(keys) < n:
        k = rng.getrandbits(63) | 1
        if k not in seen:
            seen.add(k)
            keys.append(k)
    table: dict[int, int] = {}
    homes = []
    for k in keys:
        home = k % slots
        pos = home
        while pos in table:
            pos += 1                          # overflow runs into the slack, never wraps
        table[pos] = k
        homes.append(home)
    span = max(table) + 1
    lay = _Layout(spec)
    rbase = lay.region("queries", 16 * (n + 1))
    tbase = lay.region("table", 16 * span)
    img = {}
    for i, (home, k) in enumerate(zip(homes, keys)):
        img[rbase + 16 * i] = 16 * home
        img[rbase + 16 * i + 8] = k
    for pos, k in table.items():
        img[tbase + 16 * pos] = k
        img[tbase + 16 * pos + 8] = rng.getrandbits(32)
    init = [f"  r = const {rbase:#x}", f"  tb = const {tbase:#x}",
            f"  q = const {tbase + 16 * homes[0]:#x}", f"  k = const {keys[0]}", f"  rem = const {n}"]
    body = ["  tk = load q, 8", "  hit = cmp eq tk, k", "  h16 = mul hit, 16", "  r = add r, h16",
            "  home = load r, 8", "  r8 = add r, 8", "  k = load r8, 8", "  q16 = add q, 16",
            "  t = add home, tb", "  nq = mul q16, -1", "  diff = add t, nq", "  hd = mul hit, diff",
            "  q = add q16, hd", "  nh = mul hit, -1", "  rem = add rem, nh", "  branch rem, L"]
    return lay, init, body, "r", img


_GENERATORS = {
    "PointerChase": _pointer_chase,
    "Strided": _strided,
    "IndirectGather": _indirect_gather,
    "HashProbe": _hash_probe,
}


def generate(spec: WorkloadSpec) -> tuple[Program, MemoryImage]:
    rng = random.Random(spec.seed)
    lay, init, body, result, words = _GENERATORS[spec.kind](spec, rng)
    program = _program(lay, init, body, result, spec.work_per_element)
    mem = MemoryImage(program.regions)
    for addr in sorted(words):
        mem.set_word(addr, words[addr])
    return program, mem


def load_trace_file(path: str | Path) -> Program:
    """Straight-line program replaying an address trace.

    Header lines declare regions (``region NAME BASE LEN local|remote E``);
    body lines are ``L ADDR SIZE`` (load) or ``S ADDR SIZE`` (store of zero).
    """
    text = Path(path).read_text()
    header: list[str] = []
    body: list[str] = []
    diags: list[Diagnostic] = []
    regions: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if toks[0] == "region":
            if body:
                diags.append(Diagnostic(lineno, "region declared after the first access"))
                continue
            header.append(" ".join(toks))
            try:
                regions.append((int(toks[2], 0), int(toks[3], 0)))
            except (IndexError, ValueError):
                diags.append(Diagnostic(lineno, "malformed region declaration"))
            continue
        if toks[0] not in ("L", "S") or len(toks) != 3:
            diags.append(Diagnostic(lineno, f"malformed trace line '{raw.strip()}'"))
            continue
        try:
            addr, size = int(toks[1], 0), int(toks[2], 0)
        except ValueError:
            diags.append(Diagnostic(lineno, f"malformed trace line '{raw.strip()}'"))
            continue
        if not any(b <= addr and addr + size <= b + n for b, n in regions):
            diags.append(Diagnostic(lineno, f"access {addr:#x} outside declared regions"))
            continue
        if toks[0] == "L":
            body.append(f"  v{len(body)} = load {addr:#x}, {size}")
        else:
            body.append(f"  store {addr:#x}, 0, {size}")
    if diags:
        raise ParseError(diags)
    return parse_program("\n".join(header + ["fn main() {"] + body + ["}"]) + "\n")


def trace_image(p: Program) -> MemoryImage:
    return MemoryImage(p.regions)
