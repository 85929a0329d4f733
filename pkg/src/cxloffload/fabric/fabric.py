"""Discrete-event fabric: timed message delivery plus endpoint and near-core behaviour.

Endpoints answer ReadReq with the current line (ReadResp) and WriteReq with a
WriteAck at the cycle the request arrives. SliceSubmit messages are queued at
the target near core; on completion the core sends one LineFill per loaded
line and then a SliceDone carrying the live-out values. Only messages addressed
to the host are returned from :meth:`Fabric.step`.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from typing import Iterable

from ..ir.memory import MemoryImage
from .messages import FabricMessage, wire_size
from .nearcore import NearCoreState, near_execute
from .topology import Topology, route


class Fabric:
    def __init__(self, topo: Topology, mem: MemoryImage, *, near_cpi: float = 2,
                 near_latency: float = 40, slices: Iterable = ()):
        self.topo = topo
        self.mem = mem
        self.near_cpi = near_cpi
        self.near_latency = near_latency
        self.slices = {s.id: s for s in slices}
        self.cores: dict[int, NearCoreState] = {}
        self.delivered: list[FabricMessage] = []
        self.counts: Counter = Counter()
        self._queue: list[tuple[int, int, FabricMessage]] = []
        self._seq = 0
        self._paths: dict[tuple[int, int], tuple[int, int]] = {}

    # --- sending -----------------------------------------------------------
    def _path(self, src: int, dst: int) -> tuple[int, int]:
        key = (src, dst)
        if key not in self._paths:
            links = route(self.topo, src, dst)
            self._paths[key] = (sum(l.latency for l in links),
                                min((l.bandwidth for l in links), default=0))
        return self._paths[key]

    def delivery_time(self, src: int, dst: int, issue_time: int, nbytes: int) -> int:
        if src == dst:
            return issue_time
        latency, bandwidth = self._path(src, dst)
        return issue_time + latency + math.ceil(nbytes / bandwidth)

    def send(self, kind: str, src: int, dst: int, issue_time: int, *, line: int | None = None,
             payload: bytes = b"", slice_id: int | None = None, values: tuple[int, ...] = (),
             result_lines: int = 0, meta=None) -> FabricMessage:
        nbytes = wire_size(kind, len(values), result_lines)
        msg = FabricMessage(kind, src, dst, issue_time,
                            self.delivery_time(src, dst, issue_time, nbytes), self._seq,
                            line, payload, slice_id, tuple(values), nbytes, meta)
        self._seq += 1
        heapq.heappush(self._queue, (msg.deliver_time, msg.seq, msg))
        return msg

    # --- stepping ----------------------------------------------------------
    def next_event_time(self) -> int | None:
        times = [self._queue[0][0]] if self._queue else []
        times += [c.running[0] for c in self.cores.values() if c.running is not None]
        return min(times) if times else None

    def idle(self) -> bool:
        return self.next_event_time() is None

    def step(self, now: int) -> list[FabricMessage]:
        """Process every event up to ``now``; return messages delivered to the host."""
        out: list[FabricMessage] = []
        host = self.topo.host
        while True:
            t = self.next_event_time()
            if t is None or t > now:
                return out
            core = min((c for c in self.cores.values() if c.running is not None and c.running[0] == t),
                       key=lambda c: c.node, default=None)
            if core is not None:
                self._complete(core)
                continue
            _, _, msg = heapq.heappop(self._queue)
            self.delivered.append(msg)
            self.counts[msg.kind] += 1
            if msg.dst == host:
                out.append(msg)
            else:
                self._deliver_remote(msg)

    def _deliver_remote(self, msg: FabricMessage) -> None:
        t = msg.deliver_time
        if msg.kind == "ReadReq":
            self.send("ReadResp", msg.dst, msg.src, t, line=msg.line,
                      payload=self.mem.read_line(msg.line))
        elif msg.kind == "WriteReq":
            self.send("WriteAck", msg.dst, msg.src, t, line=msg.line)
        elif msg.kind == "SliceSubmit":
            core = self.cores.get(msg.dst)
            if core is None:
                core = self.cores[msg.dst] = NearCoreState(msg.dst, self.near_cpi, self.near_latency)
            core.queue.append(msg)
            self._start(core, t)
        else:
            raise RuntimeError(f"unexpected {msg.kind} delivered to node {msg.dst}")

    def _start(self, core: NearCoreState, now: int) -> None:
        if core.running is not None or not core.queue:
            return
        msg = core.queue.popleft()
        start = max(now, core.busy_until)
        s = self.slices[msg.slice_id]
        result = near_execute(s, list(msg.values), self.mem, core, self.topo)
        finish = start + math.ceil(result.cycles)
        core.running = (finish, msg, result)
        core.busy_until = finish
        core.executed += 1

    def _complete(self, core: NearCoreState) -> None:
        finish, submit, result = core.running
        core.running = None
        s = self.slices[submit.slice_id]
        for line in result.lines:
            self.send("LineFill", core.node, submit.src, finish, line=line,
                      payload=self.mem.read_line(line), slice_id=s.id)
        values = tuple(result.live_outs.get(r, 0) for r in s.live_outs)
        self.send("SliceDone", core.node, submit.src, finish, slice_id=s.id, values=values,
                  result_lines=math.ceil(8 * len(values) / 64), meta=result)
        self._start(core, finish)

    # --- reporting ---------------------------------------------------------
    def log_lines(self) -> list[str]:
        return [m.log_line() for m in self.delivered]

    def pair_counts(self) -> Counter:
        return Counter((m.kind, m.src, m.dst) for m in self.delivered)
