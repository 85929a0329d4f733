"""Message-level fabric model: topology, routing, timed delivery and near cores."""

from .fabric import Fabric
from .messages import DATA_KINDS, KINDS, MESSAGE_OBSERVERS, FabricMessage, PayloadError
from .nearcore import NearCoreState, NearResult, near_execute
from .topology import (
    BUILTIN_TOPOLOGIES, Link, Topology, TopologyError, builtin_topology, hops,
    parse_topology, path_latency, route,
)


def fabric_send(state: Fabric, kind: str, src: int, dst: int, issue_time: int, **kw) -> FabricMessage:
    return state.send(kind, src, dst, issue_time, **kw)


def fabric_step(state: Fabric, now: int) -> list[FabricMessage]:
    return state.step(now)


__all__ = [
    "BUILTIN_TOPOLOGIES", "DATA_KINDS", "Fabric", "FabricMessage", "KINDS", "Link",
    "MESSAGE_OBSERVERS", "NearCoreState", "NearResult", "PayloadError", "Topology",
    "TopologyError", "builtin_topology", "fabric_send", "fabric_step", "hops",
    "near_execute", "parse_topology", "path_latency", "route",
]
