from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from ..ir.types import Program

KINDS = ("host", "switch", "endpoint")
_KIND_ALIASES = {"host": "host", "hostrc": "host", "switch": "switch", "endpoint": "endpoint"}

DEFAULT_HOP_LATENCY = 150
DEFAULT_BANDWIDTH = 8


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    latency: int
    bandwidth: int

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class Topology:
    nodes: dict[int, str]
    links: tuple[Link, ...]
    ownership: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        hosts = [n for n, k in self.nodes.items() if k == "host"]
        if len(hosts) != 1:
            raise TopologyError(f"topology needs exactly one host, found {len(hosts)}")
        for kind in self.nodes.values():
            if kind not in KINDS:
                raise TopologyError(f"unknown node kind {kind}")
        for link in self.links:
            for n in (link.a, link.b):
                if n not in self.nodes:
                    raise TopologyError(f"edge references unknown node {n}")
            if link.latency < 0 or link.bandwidth <= 0:
                raise TopologyError(f"bad edge parameters {link}")
        for ep in self.ownership:
            if self.nodes.get(ep) != "endpoint":
                raise TopologyError(f"node {ep} owns memory but is not an endpoint")
        spans = sorted((b, b + n) for ranges in self.ownership.values() for b, n in ranges)
        for (_, end), (base, _) in zip(spans, spans[1:]):
            if base < end:
                raise TopologyError("owned ranges overlap")
        seen = self._reachable(hosts[0])
        if seen != set(self.nodes):
            missing = sorted(set(self.nodes) - seen)
            raise TopologyError(f"topology is disconnected: nodes {missing} unreachable from host")

    def _adjacency(self) -> dict[int, list[tuple[int, Link]]]:
        adj: dict[int, list[tuple[int, Link]]] = {n: [] for n in self.nodes}
        for link in self.links:
            adj[link.a].append((link.b, link))
            adj[link.b].append((link.a, link))
        for n in adj:
            adj[n].sort(key=lambda t: (t[0], t[1].latency))
        return adj

    def _reachable(self, start: int) -> set[int]:
        adj = self._adjacency()
        seen = {start}
        todo = deque([start])
        while todo:
            n = todo.popleft()
            for m, _ in adj[n]:
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return seen

    @property
    def host(self) -> int:
        return next(n for n, k in self.nodes.items() if k == "host")

    def of_kind(self, kind: str) -> list[int]:
        return sorted(n for n, k in self.nodes.items() if k == kind)

    @property
    def endpoints(self) -> list[int]:
        return self.of_kind("endpoint")

    @property
    def switches(self) -> list[int]:
        return self.of_kind("switch")

    def owner_of(self, addr: int) -> int | None:
        for ep, ranges in self.ownership.items():
            for base, length in ranges:
                if base <= addr < base + length:
                    return ep
        return None

    def with_ownership(self, program: Program) -> Topology:
        """Add ownership for every Remote region of ``program`` not yet owned."""
        own = {ep: list(r) for ep, r in self.ownership.items()}
        for region in program.regions:
            if not region.space.is_remote:
                continue
            if self.owner_of(region.base) is not None:
                continue
            ep = region.space.endpoint
            if self.nodes.get(ep) != "endpoint":
                raise TopologyError(f"region {region.name} names endpoint {ep}, "
                                    f"which is not an endpoint of the topology")
            own.setdefault(ep, []).append((region.base, region.length))
        return replace(self, ownership={ep: tuple(r) for ep, r in own.items()})

    def check_program(self, program: Program) -> None:
        for region in program.regions:
            if not region.space.is_remote:
                continue
            ep = region.space.endpoint
            for addr in (region.base, region.end - 1):
                if self.owner_of(addr) != ep:
                    raise TopologyError(f"remote region {region.name} is not owned by endpoint {ep}")

    def with_latency(self, latency: int) -> Topology:
        return replace(self, links=tuple(replace(l, latency=latency) for l in self.links))

    def scaled(self, latency: int | None = None, bandwidth: int | None = None) -> Topology:
        links = tuple(replace(l, latency=l.latency if latency is None else latency,
                              bandwidth=l.bandwidth if bandwidth is None else bandwidth)
                      for l in self.links)
        return replace(self, links=links)

    def to_text(self) -> str:
        rows = [f"node {n} {self.nodes[n]}" for n in sorted(self.nodes)]
        rows += [f"edge {l.a} {l.b} {l.latency} {l.bandwidth}" for l in self.links]
        for ep in sorted(self.ownership):
            rows += [f"owns {ep} {b:#x} {n}" for b, n in self.ownership[ep]]
        return "\n".join(rows) + "\n"


def route(topo: Topology, src: int, dst: int) -> list[Link]:
    """Shortest path by hop count; ties go to the smallest node-id sequence."""
    for n in (src, dst):
        if n not in topo.nodes:
            raise TopologyError(f"no route from {src} to {dst}: node {n} is not in the topology")
    if src == dst:
        return []
    adj = topo._adjacency()
    dist = {dst: 0}
    todo = deque([dst])
    while todo:
        n = todo.popleft()
        for m, _ in adj[n]:
            if m not in dist:
                dist[m] = dist[n] + 1
                todo.append(m)
    if src not in dist:
        raise TopologyError(f"no route from {src} to {dst}")
    path: list[Link] = []
    cur = src
    while cur != dst:
        nxt, link = min(((m, l) for m, l in adj[cur] if dist.get(m) == dist[cur] - 1),
                        key=lambda t: (t[0], t[1].latency))
        path.append(link)
        cur = nxt
    return path


def hops(topo: Topology, src: int, dst: int) -> int:
    return len(route(topo, src, dst))


def path_latency(topo: Topology, src: int, dst: int) -> int:
    return sum(l.latency for l in route(topo, src, dst))


def parse_topology(text: str) -> Topology:
    nodes: dict[int, str] = {}
    links: list[Link] = []
    owns: dict[int, list[tuple[int, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        try:
            if toks[0] == "node" and len(toks) == 3:
                kind = _KIND_ALIASES.get(toks[2].lower())
                if kind is None:
                    raise ValueError(f"unknown node kind {toks[2]}")
                nodes[int(toks[1], 0)] = kind
            elif toks[0] == "edge" and len(toks) == 5:
                links.append(Link(*(int(t, 0) for t in toks[1:])))
            elif toks[0] == "owns" and len(toks) == 4:
                owns.setdefault(int(toks[1], 0), []).append((int(toks[2], 0), int(toks[3], 0)))
            else:
                raise ValueError(f"malformed line '{raw.strip()}'")
        except ValueError as exc:
            raise TopologyError(f"topology line {lineno}: {exc}") from None
    return Topology(nodes, tuple(links), {ep: tuple(r) for ep, r in owns.items()})


def builtin_topology(name: str, hop_latency: int = DEFAULT_HOP_LATENCY,
                     bandwidth: int = DEFAULT_BANDWIDTH) -> Topology:
    """``line``: host-switch-endpoint(2). ``dual``: two endpoints (2, 3) behind one switch.
    ``direct``: endpoint 2 attached to the host."""
    lat, bw = hop_latency, bandwidth
    if name == "line":
        return Topology({0: "host", 1: "switch", 2: "endpoint"},
                        (Link(0, 1, lat, bw), Link(1, 2, lat, bw)))
    if name == "dual":
        return Topology({0: "host", 1: "switch", 2: "endpoint", 3: "endpoint"},
                        (Link(0, 1, lat, bw), Link(1, 2, lat, bw), Link(1, 3, lat, bw)))
    if name == "direct":
        return Topology({0: "host", 2: "endpoint"}, (Link(0, 2, lat, bw),))
    raise TopologyError(f"unknown builtin topology '{name}'")


BUILTIN_TOPOLOGIES = ("line", "dual", "direct")


def make_topology(nodes: Iterable[tuple[int, str]], edges: Iterable[tuple[int, int, int, int]]) -> Topology:
    return Topology(dict(nodes), tuple(Link(*e) for e in edges))
