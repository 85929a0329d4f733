from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxloffload.analysis import CostModel, annotate, extract_slices, slice_as_program
from cxloffload.fabric import (
    Fabric, FabricMessage, NearCoreState, PayloadError, TopologyError, builtin_topology,
    near_execute, parse_topology, route,
)
from cxloffload.fabric.messages import wire_size
from cxloffload.host import simulate
from cxloffload.ir import MemoryImage, interpret, parse_program
from cxloffload.workloads import KINDS, WorkloadSpec, generate

CHASE3_BLOCK = ("region far 0x1000 256 remote 2\nfn main() {\n  p = const 0x1000\n"
                + "  p = load p, 8\n" * 3 + "  ret p\n}\n")


def block_chase():
    p = parse_program(CHASE3_BLOCK)
    annotated, _ = annotate(p)
    (s,) = extract_slices(annotated)
    mem = MemoryImage(p.regions)
    mem.set_word(0x1000, 0x1040)
    mem.set_word(0x1040, 0x1080)
    mem.set_word(0x1080, 0)
    return p, s, mem


# --- route ------------------------------------------------------------------------

def test_route_to_self_is_empty():
    assert route(builtin_topology("line"), 2, 2) == []


def test_route_line_host_to_endpoint():
    assert len(route(builtin_topology("line"), 0, 2)) == 2


def test_route_unknown_node():
    with pytest.raises(TopologyError, match="9"):
        route(builtin_topology("line"), 0, 9)


def test_route_tie_break_smallest_ids():
    topo = parse_topology("node 0 host\nnode 1 switch\nnode 2 switch\nnode 3 endpoint\n"
                          "edge 0 2 10 8\nedge 0 1 10 8\nedge 2 3 10 8\nedge 1 3 10 8\n")
    path = route(topo, 0, 3)
    assert [(l.a, l.b) for l in path] == [(0, 1), (1, 3)]
    assert route(topo, 0, 3) == path


def test_topology_rejects_disconnected_and_double_host():
    with pytest.raises(TopologyError):
        parse_topology("node 0 host\nnode 1 endpoint\n")
    with pytest.raises(TopologyError):
        parse_topology("node 0 host\nnode 1 host\nedge 0 1 10 8\n")


def test_topology_text_round_trip():
    topo = builtin_topology("dual")
    assert parse_topology(topo.to_text()) == topo


# --- fabric_send ---------------------------------------------------------------------

def one_hop_fabric():
    topo = parse_topology("node 0 host\nnode 1 endpoint\nedge 0 1 150 8\nowns 1 0x1000 0x1000\n")
    mem = MemoryImage(())
    return Fabric(topo, mem)


def test_send_request_latency():
    f = one_hop_fabric()
    assert f.send("ReadReq", 0, 1, 100, line=0x1000).deliver_time == 250


def test_send_data_serialization():
    f = one_hop_fabric()
    msg = f.send("ReadResp", 1, 0, 100, line=0x1000, payload=bytes(64))
    assert msg.deliver_time == 100 + 150 + 8


def test_send_to_self_is_instant():
    f = one_hop_fabric()
    assert f.send("WriteAck", 1, 1, 77, line=0x1000).deliver_time == 77


def test_seq_strictly_increasing():
    f = one_hop_fabric()
    seqs = [f.send("ReadReq", 0, 1, t, line=0x1000).seq for t in (5, 1, 3)]
    assert seqs == sorted(seqs) and len(set(seqs)) == 3


def test_payload_law_enforced():
    with pytest.raises(PayloadError):
        FabricMessage("ReadResp", 1, 0, 0, 10, 0, line=0x1000, payload=bytes(32))
    with pytest.raises(PayloadError):
        FabricMessage("ReadResp", 1, 0, 0, 10, 0, line=0x1010, payload=bytes(64))
    with pytest.raises(PayloadError):
        FabricMessage("ReadReq", 0, 1, 0, 10, 0, line=0x1000, payload=bytes(64))
    with pytest.raises(ValueError):
        FabricMessage("ReadReq", 0, 1, 10, 5, 0, line=0x1000)


def test_wire_sizes():
    assert wire_size("ReadResp") == 64
    assert wire_size("ReadReq") == 0
    assert wire_size("SliceSubmit", 3) == 24
    assert wire_size("SliceDone", 2, 1) == 64


# --- near_execute ------------------------------------------------------------------------

def test_near_three_deep_chase_at_endpoint():
    p, s, mem = block_chase()
    topo = builtin_topology("line").with_ownership(p)
    res = near_execute(s, [0x1000], mem, NearCoreState(2, 2, 40), topo)
    assert res.live_outs == {"p": 0}
    assert res.cycles == 3 * 2 + 3 * 40 == 126
    assert res.lines == [0x1080, 0x1040, 0x1000]


def test_near_empty_slice():
    from cxloffload.analysis import OffloadSlice
    s = OffloadSlice(0, "main", (), (), (), frozenset(), 1)
    res = near_execute(s, [], MemoryImage(()), NearCoreState(2, 2, 40), builtin_topology("line"))
    assert res.cycles == 0 and res.lines == []


def test_near_switch_pays_fabric_per_load():
    p, s, mem = block_chase()
    topo = builtin_topology("line", hop_latency=50).with_ownership(p)
    res = near_execute(s, [0x1000], mem, NearCoreState(1, 2, 40), topo)
    assert res.cycles == 3 * 2 + 3 * (2 * 50)


def test_near_unowned_line_is_error_payload():
    p, s, mem = block_chase()
    topo = builtin_topology("line").with_ownership(p)
    res = near_execute(s, [0x9000], mem, NearCoreState(2, 2, 40), topo)
    assert res.error is not None and res.live_outs == {}


@pytest.mark.parametrize("kind", KINDS)
def test_near_matches_interpreter_on_slice(kind):
    for seed in range(5):
        p, mem = generate(WorkloadSpec(kind=kind, n=10, seed=seed))
        annotated, _ = annotate(p)
        topo = builtin_topology("line").with_ownership(p)
        for s in extract_slices(annotated):
            # run the slice from the values its live-ins have at loop entry
            sp = slice_as_program(s, p.regions)
            ins = _entry_values(p, s)
            ref = interpret(sp, mem, ins)
            got = near_execute(s, [ins[r] for r in s.live_ins], mem.copy(), NearCoreState(2, 2, 40), topo)
            assert [got.live_outs[r] for r in s.live_outs] == [ref.final_registers[r] for r in s.live_outs]
            assert [(u, a, v) for u, a, v in got.loads] == [(r.uid, r.address, r.value) for r in ref.load_trace]


def _entry_values(p, s):
    """Register values just before the first slice instruction executes."""
    prefix = []
    for ins in p.function("main").body:
        if ins.op == "label":
            break
        prefix.append(ins)
    regs = {}
    for ins in prefix:
        if ins.op == "const":
            regs[ins.dests[0]] = ins.args[0] % 2**64
    return {r: regs[r] for r in s.live_ins}


# --- fabric_step ---------------------------------------------------------------------

def test_step_empty():
    assert one_hop_fabric().step(10**6) == []


def test_step_same_cycle_in_seq_order():
    f = one_hop_fabric()
    a = f.send("WriteAck", 1, 0, 0, line=0x1000)
    b = f.send("WriteAck", 1, 0, 0, line=0x1000)
    assert [m.seq for m in f.step(150)] == [a.seq, b.seq]


def test_step_request_generates_response():
    p, _, mem = block_chase()
    topo = builtin_topology("line").with_ownership(p)
    f = Fabric(topo, mem)
    f.send("ReadReq", 0, 2, 0, line=0x1000)
    assert f.step(299) == []
    (resp,) = f.step(10**6)
    assert resp.kind == "ReadResp" and resp.deliver_time == 608
    assert int.from_bytes(resp.payload[:8], "little") == 0x1040


def test_step_fifo_near_core():
    p, s, mem = block_chase()
    topo = builtin_topology("line").with_ownership(p)
    f = Fabric(topo, mem, near_cpi=2, near_latency=40, slices=[s])
    f.send("SliceSubmit", 0, 2, 0, slice_id=s.id, values=(0x1000,))
    f.send("SliceSubmit", 0, 2, 10, slice_id=s.id, values=(0x1000,))
    out = f.step(10**6)
    done = [m for m in out if m.kind == "SliceDone"]
    arrive1 = 300 + 1            # 8 bytes of live-ins at 8 bytes/cycle
    arrive2 = 10 + 300 + 1
    finish1 = arrive1 + 126
    finish2 = max(arrive2, finish1) + 126       # waits for the first slice
    assert [m.issue_time for m in done] == [finish1, finish2]
    assert done[0].values == (0,) and done[1].values == (0,)
    fills = [m for m in out if m.kind == "LineFill"]
    assert len(fills) == 3 + 3


# --- whole-run properties --------------------------------------------------------------

def _pairs(log: list[str]) -> Counter:
    c = Counter()
    for line in log:
        _, _, kind, pair, *_ = line.split()
        src, dst = pair.split("->")
        c[(kind, int(src), int(dst))] += 1
    return c


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("offload", [False, True])
def test_conservation_and_causality(kind, offload):
    from cxloffload.analysis import analyze
    p, mem = generate(WorkloadSpec(kind=kind, n=24, seed=4))
    topo, cm = builtin_topology("line"), CostModel()
    prog = analyze(p, topo, cm).offloaded if offload else p
    rep = simulate(prog, mem, topo, cm)
    pairs = _pairs(rep.message_log)
    for (k, src, dst), count in pairs.items():
        if k == "ReadReq":
            assert pairs[("ReadResp", dst, src)] == count
        if k == "SliceSubmit":
            assert pairs[("SliceDone", dst, src)] == count
        if k == "WriteReq":
            assert pairs[("WriteAck", dst, src)] == count
    seen = set()
    for line in rep.message_log:
        fields = line.split()
        deliver, seq = int(fields[0]), int(fields[1])
        issue = int(fields[4].split("=")[1])
        assert deliver >= issue
        assert seq not in seen
        seen.add(seq)


def test_message_log_deterministic():
    from cxloffload.analysis import analyze
    p, mem = generate(WorkloadSpec(kind="HashProbe", n=24, seed=4))
    topo, cm = builtin_topology("dual"), CostModel()
    op = analyze(p, topo, cm).offloaded
    assert simulate(op, mem, topo, cm).message_log == simulate(op, mem, topo, cm).message_log


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0, 64]), st.integers(1, 500), st.sampled_from([1, 4, 8, 64]))
def test_delivery_rule(issue, nbytes, lat, bw):
    topo = parse_topology(f"node 0 host\nnode 1 switch\nnode 2 endpoint\nedge 0 1 {lat} {bw}\n"
                          f"edge 1 2 {lat + 1} {bw * 2}\n")
    f = Fabric(topo, MemoryImage(()))
    assert f.delivery_time(0, 2, issue, nbytes) == issue + 2 * lat + 1 + -(-nbytes // bw)
