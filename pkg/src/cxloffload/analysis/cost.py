"""Timing-window cost model and offload-site choice.

The estimated window of a slice at a site is::

    submit_overhead
      + 2 * hops(host, site) * hop_latency
      + dynamic_instructions * site_cpi
      + result_lines * line_transfer
      + sum over dynamic slice accesses of access_cost(site -> owning endpoint)

where ``site_cpi`` is ``host_cpi`` at the host and ``near_cpi`` elsewhere,
``result_lines`` is the number of 64-byte lines needed to return the live-out
values, and ``access_cost`` is ``near_mem`` when the site owns the line and
``2 * hops(site, owner) * hop_latency`` otherwise. Loop slices multiply their
instruction and access counts by the estimated trip count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from ..fabric.topology import Topology, TopologyError, hops

_KIND_RANK = {"endpoint": 0, "switch": 1, "host": 2}


@dataclass(frozen=True, order=True)
class Site:
    kind: str
    node: int

    def __str__(self) -> str:
        return f"{self.kind}({self.node})"

    @classmethod
    def parse(cls, text: str) -> Site:
        kind, _, rest = text.partition("(")
        return cls(kind, int(rest.rstrip(")")))


def host_site(topo: Topology) -> Site:
    return Site("host", topo.host)


@dataclass(frozen=True)
class CostModel:
    submit_overhead: float = 20.0
    hop_latency: float = 150.0
    line_transfer: float = 8.0
    near_cpi: float = 2.0
    host_cpi: float = 1.0
    l1_hit: float = 4.0
    local_mem: float = 80.0
    near_mem: float = 40.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"cost model parameter {f.name} must be > 0")
        if self.near_cpi < self.host_cpi:
            raise ValueError("near_cpi must be >= host_cpi")

    def with_overrides(self, **kw) -> CostModel:
        return replace(self, **{k: float(v) for k, v in kw.items()})

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def result_lines(n_live_outs: int) -> int:
    return math.ceil(8 * n_live_outs / 64)


def access_cost(cm: CostModel, topo: Topology, site: Site, owner: int) -> float:
    if site.node == owner and site.kind != "host":
        return cm.near_mem
    return 2 * hops(topo, site.node, owner) * cm.hop_latency


def estimate_window(s, cm: CostModel, topo: Topology, site: Site) -> float:
    if site.node not in topo.nodes or topo.nodes[site.node] != site.kind:
        raise TopologyError(f"site {site} is not a node of the topology")
    trips = s.trip_estimate
    window = cm.submit_overhead + 2 * hops(topo, topo.host, site.node) * cm.hop_latency
    cpi = cm.host_cpi if site.kind == "host" else cm.near_cpi
    window += len(s.instructions) * trips * cpi
    window += result_lines(len(s.live_outs)) * cm.line_transfer
    for ins in s.instructions:
        if ins.is_memory:
            window += trips * access_cost(cm, topo, site, ins.space.endpoint)
    return window


def candidate_sites(s, topo: Topology) -> list[Site]:
    sites = [host_site(topo)]
    sites += [Site("switch", n) for n in topo.switches]
    sites += [Site("endpoint", n) for n in sorted(s.touched_endpoints) if n in topo.endpoints]
    return sites


def choose_site(s, cm: CostModel, topo: Topology) -> Site:
    """Argmin of the estimated window; ties prefer endpoint, then switch, then host."""
    if not topo.endpoints:
        raise TopologyError("topology has no endpoint")
    return min(candidate_sites(s, topo),
               key=lambda site: (estimate_window(s, cm, topo, site), _KIND_RANK[site.kind], site.node))
