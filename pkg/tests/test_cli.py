from __future__ import annotations

import csv
import io
import json
from dataclasses import fields

import pytest

from cxloffload import cli
from cxloffload.analysis import CostModel
from cxloffload.cli import (
    CSV_HEADER, EXIT_CONFIG, EXIT_ERROR, EXIT_OK, EXIT_ORACLE, cmd_compare, cmd_run, cmd_sweep, execute, main,
)
from cxloffload.config import KEYS, ConfigError, load_config
from cxloffload.host import CoreConfig, OracleMismatch, SimReport
from cxloffload.workloads import WorkloadSpec

SMALL = ["n=64", "seed=3"]


def cfg_for(tmp_path, *sets: str):
    return load_config(None, [*SMALL, f"output={tmp_path}", *sets])


def run_report(tmp_path, *sets: str) -> SimReport:
    cfg = cfg_for(tmp_path, *sets)
    assert cmd_run(cfg) == EXIT_OK
    return SimReport.from_json((tmp_path / "report.json").read_text())


# --- config ------------------------------------------------------------------------------

def test_precedence_cli_over_file_over_default(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("n = 10\nseed = 5   # comment\n")
    cfg = load_config(f, ["n=20"])
    assert cfg.n == 20 and cfg.seed == 5 and cfg.stride == KEYS["stride"].default


def test_unknown_key_names_it(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("nn = 10\n")
    with pytest.raises(ConfigError, match="'nn'"):
        load_config(f)
    with pytest.raises(ConfigError, match="'bogus'"):
        load_config(None, ["bogus=1"])


def test_bad_values_rejected():
    for item in ["n=abc", "mode=fast", "near_cpi=0.5", "space=remote x", "rob=0"]:
        with pytest.raises(ConfigError):
            load_config(None, [item])


def test_every_parameter_is_a_config_key():
    names = {f.name for f in fields(CostModel)} | {f.name for f in fields(CoreConfig)}
    names |= {"n", "stride", "seed", "space", "work_per_element", "capacity"}
    assert names <= set(KEYS)
    assert all(k.doc for k in KEYS.values())


def test_dump_config_lists_every_key(capsys):
    assert main(["dump-config"]) == EXIT_OK
    out = capsys.readouterr().out
    listed = [line.split("=")[0].strip() for line in out.splitlines()]
    assert listed == list(KEYS)


# --- run ---------------------------------------------------------------------------------

def test_baseline_has_no_slices_and_offload_wins(tmp_path):
    base = run_report(tmp_path / "b", "mode=baseline")
    off = run_report(tmp_path / "o", "mode=offload")
    assert base.slices == []
    assert off.slices and off.stall_cycles < base.stall_cycles
    assert base.workload_digest == off.workload_digest
    assert (tmp_path / "o" / "analysis.txt").exists() and (tmp_path / "o" / "summary.txt").exists()


def test_adaptive_run_writes_profile_and_log(tmp_path):
    run_report(tmp_path, "mode=adaptive", "rounds=2")
    assert json.loads((tmp_path / "profile.json").read_text())["format_version"] == 1
    assert len((tmp_path / "adaptation.log").read_text().splitlines()) >= 1


def test_main_exit_codes(tmp_path, capsys):
    assert main(["run", "--set", "nope=1"]) == EXIT_CONFIG
    assert "nope" in capsys.readouterr().err
    assert main(["run", "--set", f"output={tmp_path}", "--set", "n=8"]) == EXIT_OK
    assert main(["run", "--set", "program=/nonexistent/prog.ir"]) == EXIT_ERROR
    assert main(["run", "--set", "topology=/nonexistent.topo"]) == EXIT_CONFIG


def test_oracle_mismatch_exit_code(tmp_path, monkeypatch):
    def broken(*a, **kw):
        raise OracleMismatch("first divergent load #0")
    monkeypatch.setattr(cli, "simulate", broken)
    assert main(["run", "--set", f"output={tmp_path}", "--set", "n=8"]) == EXIT_ORACLE


def test_sizing_error_is_config_error():
    with pytest.raises(ConfigError):
        execute(load_config(None, ["n=1024", "capacity=4096"]))


def test_program_and_trace_inputs(tmp_path):
    prog = tmp_path / "p.ir"
    prog.write_text("region far 0x1000 64 remote 2\nfn main() {\n  v = load 0x1000, 8\n  ret v\n}\n")
    assert execute(cfg_for(tmp_path, f"program={prog}"))["report"].committed == 2
    tr = tmp_path / "t.trace"
    tr.write_text("region heap 0x1000 4096 remote 2\nL 0x1000 8\nL 0x1040 8\n")
    assert execute(cfg_for(tmp_path, f"trace={tr}", "mode=baseline"))["report"].fabric["ReadReq"] == 2


# --- sweep ---------------------------------------------------------------------------------

def rows_of(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_hop_latency_increasing(tmp_path):
    text = cmd_sweep(cfg_for(tmp_path, "mode=baseline"), "hop_latency", ["50", "150", "450"])
    totals = [int(r["total_cycles"]) for r in rows_of(text)]
    assert totals[0] < totals[1] < totals[2]
    assert [r["param"] for r in rows_of(text)] == ["50", "150", "450"]


def test_sweep_empty_is_header_only(tmp_path):
    assert cmd_sweep(cfg_for(tmp_path), "n", []) == ",".join(CSV_HEADER) + "\n"


def test_sweep_single_value_matches_run(tmp_path):
    cfg = cfg_for(tmp_path, "mode=offload")
    (row,) = rows_of(cmd_sweep(cfg, "near_cpi", ["3"]))
    rep = run_report(tmp_path, "mode=offload", "near_cpi=3")
    assert int(row["total_cycles"]) == rep.total_cycles
    assert int(row["stall_cycles"]) == rep.stall_cycles
    assert row["mean_utilization"] == f"{rep.mean_utilization():.6f}"


def test_sweep_parallel_matches_serial_and_orders_rows(tmp_path):
    cfg = cfg_for(tmp_path)
    serial = cmd_sweep(cfg, "n", ["32", "16"], ["baseline", "offload"])
    assert cmd_sweep(cfg, "n", ["32", "16"], ["baseline", "offload"], jobs=2) == serial
    assert [(r["param"], r["mode"]) for r in rows_of(serial)] == [
        ("32", "baseline"), ("32", "offload"), ("16", "baseline"), ("16", "offload")]


def test_sweep_rejects_non_numeric(tmp_path):
    with pytest.raises(ConfigError, match="not numeric"):
        cmd_sweep(cfg_for(tmp_path), "workload", ["Strided"])
    with pytest.raises(ConfigError):
        cmd_sweep(cfg_for(tmp_path), "n", ["ten"])
    assert main(["sweep", "mode", "baseline"]) == EXIT_CONFIG


# --- compare -------------------------------------------------------------------------------

def test_compare_self_and_ratio(tmp_path):
    run_report(tmp_path / "b", "mode=baseline")
    off = run_report(tmp_path / "o", "mode=offload")
    a, b = str(tmp_path / "b" / "report.json"), str(tmp_path / "o" / "report.json")
    assert "cycle ratio   1.000" in cmd_compare(a, a)
    base = SimReport.from_json(open(a).read())
    assert f"cycle ratio   {off.total_cycles / base.total_cycles:.3f}" in cmd_compare(a, b)


def test_compare_refuses_mismatched_workloads(tmp_path):
    x = run_report(tmp_path / "x")
    y = run_report(tmp_path / "y", "seed=4")
    with pytest.raises(ValueError) as exc:
        cmd_compare(str(tmp_path / "x" / "report.json"), str(tmp_path / "y" / "report.json"))
    assert x.workload_digest in str(exc.value) and y.workload_digest in str(exc.value)


def test_compare_corrupt_json_names_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError, match="bad.json"):
        cmd_compare(str(bad), str(bad))
    assert main(["compare", str(bad), str(bad)]) == EXIT_ERROR
    assert "bad.json" in capsys.readouterr().err


def test_run_is_deterministic(tmp_path):
    run_report(tmp_path / "1", "workload=HashProbe")
    run_report(tmp_path / "2", "workload=HashProbe")
    for name in ("report.json", "summary.txt", "analysis.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_workload_spec_defaults_match_config():
    spec = WorkloadSpec()
    assert KEYS["stride"].default == spec.stride
    assert KEYS["work_per_element"].default == spec.work_per_element
