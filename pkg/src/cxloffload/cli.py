"""Batch driver: run, sweep, compare and dump-config."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .adaptive import adaptive_session
from .analysis.pipeline import analyze, dump_json, dump_text
from .config import KEYS, NUMERIC, ConfigError, RunConfig, load_config, parse_space
from .fabric.topology import BUILTIN_TOPOLOGIES, TopologyError, builtin_topology, parse_topology
from .host.report import STALL_CAUSES, SimReport
from .host.sim import OracleMismatch, simulate
from .ir.memory import MemoryImage
from .ir.text import format_program, parse_program
from .ir.types import ParseError, Program
from .workloads import WorkloadError, WorkloadSpec, generate, load_trace_file, trace_image

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_ORACLE = 0, 1, 2, 3
CSV_HEADER = ("param", "mode", "total_cycles", "stall_cycles", "mean_utilization")


def build_workload(cfg: RunConfig) -> tuple[Program, MemoryImage]:
    if cfg.trace:
        p = load_trace_file(cfg.trace)
        return p, trace_image(p)
    if cfg.program:
        p = parse_program(Path(cfg.program).read_text())
        if cfg.memory:
            return p, MemoryImage.from_text(Path(cfg.memory).read_text(), p.regions)
        return p, MemoryImage(p.regions)
    try:
        spec = WorkloadSpec(cfg.workload, cfg.n, cfg.stride, cfg.seed, parse_space(cfg.space),
                            cfg.work_per_element, cfg.capacity or None)
        return generate(spec)
    except WorkloadError as exc:
        raise ConfigError(str(exc)) from None


def build_topology(cfg: RunConfig):
    hop = round(cfg.hop_latency)
    if cfg.topology in BUILTIN_TOPOLOGIES:
        return builtin_topology(cfg.topology, hop, cfg.bandwidth)
    try:
        text = Path(cfg.topology).read_text()
    except OSError:
        raise ConfigError(f"topology {cfg.topology!r} is neither builtin {BUILTIN_TOPOLOGIES} "
                          "nor a readable file") from None
    topo = parse_topology(text)
    if "hop_latency" in cfg.explicit:
        topo = topo.scaled(latency=hop)
    return topo


def workload_digest(p: Program, mem: MemoryImage) -> str:
    return hashlib.sha256((format_program(p) + "\n" + mem.to_text()).encode()).hexdigest()


def execute(cfg: RunConfig) -> dict:
    """Run one configuration; returns the report plus mode-specific artifacts."""
    p, mem = build_workload(cfg)
    topo = build_topology(cfg)
    cm, cc = cfg.cost_model(), cfg.core_config()
    out: dict = {}
    if cfg.mode == "baseline":
        report = simulate(p, mem, topo, cm, cc, cfg.seed, check_oracle=cfg.check_oracle)
    elif cfg.mode == "offload":
        a = analyze(p, topo, cm, batching=cfg.batching, max_slice_len=cfg.max_slice_len)
        out["analysis"] = a
        report = simulate(a.offloaded, mem, topo, cm, cc, cfg.seed, check_oracle=cfg.check_oracle)
    else:
        run = adaptive_session(p, mem, topo, cm, cc, cfg.rounds, seed=cfg.seed,
                               check_oracle=cfg.check_oracle, batching=cfg.batching,
                               alpha=cfg.alpha)
        out["analysis"] = run.analyses[-1]
        out["adaptive"] = run
        report = run.reports[-1]
    report.mode = cfg.mode
    report.workload_digest = workload_digest(p, mem)
    out["report"] = report
    return out


def summary_text(report: SimReport) -> str:
    lines = [
        f"mode            {report.mode}",
        f"workload        {report.workload_digest[:16]}",
        f"total cycles    {report.total_cycles}",
        f"committed       {report.committed}",
        f"stall cycles    {report.stall_cycles}",
    ]
    for cause in STALL_CAUSES:
        lines.append(f"  {cause:<18}{report.stalls[cause]}")
    lines.append(f"L1 hits/misses  {report.l1['hits']}/{report.l1['misses']}")
    if report.trap:
        lines.append(f"trap            {report.trap['reason']} (uid {report.trap['uid']})")
    lines.append(f"slices          {len({r['id'] for r in report.slices})}")
    lines += _slice_table(report)
    lines.append(f"mean utilization {report.mean_utilization():.6f}")
    return "\n".join(lines) + "\n"


def _slice_table(report: SimReport) -> list[str]:
    rows: dict[int, list[dict]] = {}
    for r in report.slices:
        rows.setdefault(r["id"], []).append(r)
    out = []
    if rows:
        out.append(f"  {'id':>4} {'site':<12} {'instances':>9} {'window':>12} {'estimate':>12} {'util':>8}")
    for sid, rs in sorted(rows.items()):
        window = sum(r["window"] for r in rs) / len(rs)
        total = sum(r["window"] for r in rs)
        util = sum(r["retired_in_window"] for r in rs) / total if total else 0.0
        out.append(f"  {sid:>4} {rs[0]['site']:<12} {len(rs):>9} {window:>12.1f} "
                   f"{rs[0]['est_window']:>12.1f} {util:>8.4f}")
    return out


def cmd_run(cfg: RunConfig) -> int:
    res = execute(cfg)
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    report = res["report"]
    (outdir / "report.json").write_text(report.to_json())
    (outdir / "summary.txt").write_text(summary_text(report))
    if "analysis" in res:
        a = res["analysis"]
        (outdir / "analysis.txt").write_text(dump_text(a))
        (outdir / "analysis.json").write_text(json.dumps(dump_json(a), sort_keys=True, indent=2) + "\n")
    if "adaptive" in res:
        run = res["adaptive"]
        (outdir / "profile.json").write_text(
            json.dumps({"format_version": 1, "rounds": run.profiles}, sort_keys=True, indent=2) + "\n")
        (outdir / "adaptation.log").write_text("".join(line + "\n" for line in run.log))
    sys.stdout.write(summary_text(report))
    return EXIT_OK


def _sweep_row(args: tuple[dict, set, str, str, str]) -> tuple[str, str, int, int, str]:
    values, explicit, param, value, mode = args
    cfg = RunConfig(dict(values), set(explicit)).with_value(param, value).with_value("mode", mode)
    cfg.validate()
    r = execute(cfg)["report"]
    return (value, mode, r.total_cycles, r.stall_cycles, f"{r.mean_utilization():.6f}")


def cmd_sweep(cfg: RunConfig, param: str, values: list[str], modes: list[str] | None = None,
              jobs: int = 1) -> str:
    """CSV text with one row per value per mode, in input order."""
    if param not in KEYS:
        raise ConfigError(f"unknown config key '{param}'")
    if param not in NUMERIC:
        raise ConfigError(f"sweep parameter '{param}' is not numeric")
    modes = modes or [cfg.mode]
    for v in values:
        cfg.with_value(param, str(v))     # reject unparsable values before running anything
    tasks = [(cfg.values, cfg.explicit, param, str(v).strip(), m) for v in values for m in modes]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def _load_report(path: str) -> SimReport:
    try:
        return SimReport.from_json(Path(path).read_text())
    except (OSError, ValueError, TypeError) as exc:
        raise ValueError(f"{path}: cannot parse report: {exc}") from None


def cmd_compare(path_a: str, path_b: str) -> str:
    a, b = _load_report(path_a), _load_report(path_b)
    if a.workload_digest != b.workload_digest:
        raise ValueError(f"reports describe different workloads: {a.workload_digest} vs {b.workload_digest}")
    ratio = b.total_cycles / a.total_cycles if a.total_cycles else float("nan")
    lines = [
        f"workload      {a.workload_digest}",
        f"A             {path_a} ({a.mode})",
        f"B             {path_b} ({b.mode})",
        f"total cycles  {a.total_cycles} -> {b.total_cycles}",
        f"cycle ratio   {ratio:.3f}",
        f"stall cycles  {a.stall_cycles} -> {b.stall_cycles} ({b.stall_cycles - a.stall_cycles:+d})",
    ]
    for cause in STALL_CAUSES:
        d = b.stalls[cause] - a.stalls[cause]
        lines.append(f"  {cause:<18}{a.stalls[cause]:>10} {b.stalls[cause]:>10} {d:>+10d}")
    for tag, r in (("A", a), ("B", b)):
        lines.append(f"slices in {tag}:")
        lines += _slice_table(r) or ["  none"]
    return "\n".join(lines) + "\n"


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cxloffload", description="Remote-load offload simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("-c", "--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    run = sub.add_parser("run", help="simulate one configuration")
    config_args(run)
    sweep = sub.add_parser("sweep", help="sweep one numeric key and write CSV")
    config_args(sweep)
    sweep.add_argument("param")
    sweep.add_argument("values", nargs="*")
    sweep.add_argument("--modes", help="comma-separated modes (default: the config mode)")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("-o", "--out", help="CSV path (default: <output>/sweep.csv)")
    cmp_ = sub.add_parser("compare", help="compare two report JSON files")
    cmp_.add_argument("report_a")
    cmp_.add_argument("report_b")
    dump = sub.add_parser("dump-config", help="print every config key with its value")
    config_args(dump)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            sys.stdout.write(cmd_compare(args.report_a, args.report_b))
            return EXIT_OK
        cfg = load_config(args.config, args.set)
        if args.command == "dump-config":
            sys.stdout.write(cfg.to_text(docs=True))
            return EXIT_OK
        if args.command == "run":
            return cmd_run(cfg)
        modes = args.modes.split(",") if args.modes else None
        for m in modes or ():
            if m not in ("baseline", "offload", "adaptive"):
                raise ConfigError(f"unknown mode '{m}'")
        text = cmd_sweep(cfg, args.param, args.values, modes, args.jobs)
        out = Path(args.out) if args.out else Path(cfg.output) / "sweep.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        sys.stdout.write(text)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleMismatch as exc:
        print(f"oracle mismatch: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (ParseError, TopologyError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
