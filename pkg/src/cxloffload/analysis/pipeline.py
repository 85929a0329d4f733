"""Analyzer pipeline and the analysis dump (text and JSON)."""

from __future__ import annotations

from dataclasses import dataclass

from ..fabric.topology import Topology
from ..ir.text import format_instr
from ..ir.types import Program
from .cost import CostModel, choose_site, estimate_window, host_site
from .remotable import RegionMap, mark_remotable, propagate_remote_pointers
from .rewrite import OffloadedProgram, rewrite_with_offload
from .slicing import DEFAULT_MAX_SLICE, OffloadSlice, extract_slices


@dataclass(frozen=True)
class Analysis:
    original: Program
    annotated: Program
    remote_functions: frozenset[str]
    slices: tuple[OffloadSlice, ...]
    offloaded: OffloadedProgram
    cost_model: CostModel
    topology: Topology


def assign_sites(slices, cm: CostModel, topo: Topology) -> tuple[OffloadSlice, ...]:
    out = []
    for s in slices:
        site = choose_site(s, cm, topo)
        out.append(s.with_site(site, estimate_window(s, cm, topo, site)))
    return tuple(out)


def annotate(p: Program) -> tuple[Program, frozenset[str]]:
    rm = RegionMap.from_program(p)
    return propagate_remote_pointers(mark_remotable(p, rm), rm)


def analyze(p: Program, topo: Topology, cm: CostModel, *, batching: bool = True,
            max_slice_len: int = DEFAULT_MAX_SLICE) -> Analysis:
    """Mark, slice, place and rewrite ``p``."""
    topo = topo.with_ownership(p)
    topo.check_program(p)
    annotated, remote_fns = annotate(p)
    slices = assign_sites(extract_slices(annotated, batching=batching, max_slice_len=max_slice_len),
                          cm, topo)
    op = rewrite_with_offload(annotated, slices)
    return Analysis(p, annotated, remote_fns, slices, op, cm, topo)


def _slice_row(s: OffloadSlice, a: Analysis) -> dict:
    host_est = estimate_window(s, a.cost_model, a.topology, host_site(a.topology))
    return {
        "id": s.id,
        "function": s.function,
        "kind": "loop" if s.is_loop else "block",
        "length": len(s.instructions),
        "live_ins": list(s.live_ins),
        "live_outs": list(s.live_outs),
        "touched_endpoints": sorted(s.touched_endpoints),
        "anchor_label": s.anchor_label,
        "trip_estimate": s.trip_estimate,
        "site": str(s.site),
        "est_window": s.est_window,
        "est_host_window": host_est,
        "offloaded": a.offloaded.is_offloaded(s.id),
        "overlap_length": len(a.offloaded.overlap_regions.get(s.id, range(0))),
    }


def dump_json(a: Analysis) -> dict:
    from .. import FORMAT_VERSION

    accesses = []
    for fn in a.annotated.functions:
        for i, ins in enumerate(fn.body):
            if ins.is_memory:
                accesses.append({"function": fn.name, "index": i, "uid": ins.uid,
                                 "op": ins.op, "space": str(ins.space)})
    return {
        "format_version": FORMAT_VERSION,
        "accesses": accesses,
        "remote_functions": sorted(a.remote_functions),
        "slices": [_slice_row(s, a) for s in a.slices],
    }


def dump_text(a: Analysis) -> str:
    out = ["# annotations"]
    for fn in a.annotated.functions:
        out.append(f"fn {fn.name}")
        for i, ins in enumerate(fn.body):
            out.append(f"  {i:4d}  {format_instr(ins)}")
    out.append("# remote-pointer functions: " + (", ".join(sorted(a.remote_functions)) or "none"))
    out.append("# slices")
    if not a.slices:
        out.append("none")
    for s in a.slices:
        row = _slice_row(s, a)
        out.append(
            f"slice {s.id} fn={s.function} kind={row['kind']} len={row['length']} "
            f"live_ins=[{', '.join(s.live_ins)}] live_outs=[{', '.join(s.live_outs)}] "
            f"site={s.site} est={s.est_window:.1f} host_est={row['est_host_window']:.1f} "
            f"trips={s.trip_estimate} overlap={row['overlap_length']}"
        )
    return "\n".join(out) + "\n"
