"""Profile-guided adaptation: record realized windows, recalibrate, re-place slices.

Rounds run offline: analyze, simulate, record, recalibrate the cost model,
then re-choose every slice's site and rewrite the labeled source again.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

from .analysis.cost import CostModel, choose_site, estimate_window, host_site
from .analysis.pipeline import Analysis, analyze
from .analysis.rewrite import OffloadedProgram, rewrite_with_offload
from .analysis.slicing import OffloadSlice
from .fabric.topology import Topology
from .host.report import CoreConfig, SimReport
from .host.sim import simulate
from .ir.memory import MemoryImage
from .ir.types import Program

ALPHA = 0.5
CLAMP = (0.25, 4.0)


@dataclass
class LabelProfile:
    hits: int = 0
    window: float | None = None          # EMA of the measured window, for slice anchors
    utilization: float | None = None     # last observed overlap utilization


@dataclass
class SliceProfile:
    label: int
    measured: float | None = None        # EMA of the measured window
    estimated: float = 0.0               # estimate in force during the last observed round
    utilization: float | None = None
    trips: float | None = None           # EMA of the iterations run per instance
    sites: list[str] = field(default_factory=list)


@dataclass
class ProfileStore:
    alpha: float = ALPHA
    labels: dict[int, LabelProfile] = field(default_factory=dict)
    slices: dict[int, SliceProfile] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "alpha": self.alpha,
            "labels": {str(k): vars(v) for k, v in sorted(self.labels.items())},
            "slices": {str(k): vars(v) for k, v in sorted(self.slices.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _ema(old: float | None, x: float, alpha: float) -> float:
    return x if old is None else alpha * x + (1 - alpha) * old


def record(ps: ProfileStore, report: SimReport, anchors: dict[int, int] | None = None) -> ProfileStore:
    """Fold one report into ``ps`` (mutated and returned).

    ``anchors`` maps slice id to its anchor label; without it the label is
    taken from an existing slice entry or left unassigned (-1).
    """
    anchors = anchors or {}
    for key, row in report.labels.items():
        if row["hits"] <= 0:
            continue
        lp = ps.labels.setdefault(int(key), LabelProfile())
        lp.hits += row["hits"]
    per_slice: dict[int, list[dict]] = {}
    for row in report.slices:
        per_slice.setdefault(row["id"], []).append(row)
    for sid, rows in sorted(per_slice.items()):
        label = anchors.get(sid, ps.slices[sid].label if sid in ps.slices else -1)
        sp = ps.slices.setdefault(sid, SliceProfile(label))
        window = sum(r["window"] for r in rows) / len(rows)
        retired = sum(r["retired_in_window"] for r in rows)
        total = sum(r["window"] for r in rows)
        sp.measured = _ema(sp.measured, window, ps.alpha)
        sp.trips = _ema(sp.trips, sum(r["iterations"] for r in rows) / len(rows), ps.alpha)
        sp.estimated = rows[0]["est_window"]
        sp.utilization = retired / total if total else 0.0
        sp.sites.append(rows[0]["site"])
        if label in ps.labels:
            lp = ps.labels[label]
            lp.window = _ema(lp.window, window, ps.alpha)
            lp.utilization = sp.utilization
    return ps


def profiled(s: OffloadSlice, ps: ProfileStore) -> OffloadSlice:
    """``s`` with its static trip estimate replaced by the profiled one."""
    sp = ps.slices.get(s.id)
    if sp is None or sp.trips is None or not s.is_loop:
        return s
    return replace(s, trip_estimate=max(1, round(sp.trips)))


def refresh_estimates(ps: ProfileStore, op: OffloadedProgram, cm: CostModel, topo: Topology) -> None:
    """Re-estimate observed slices at their current site using profiled trip counts.

    Keeps the calibration ratio about per-cycle costs rather than about a
    data-dependent trip count the static analysis could not see.
    """
    topo = topo.with_ownership(op.source)
    for s in op.slices:
        sp = ps.slices.get(s.id)
        if sp is not None and sp.measured is not None and s.site is not None:
            sp.estimated = estimate_window(profiled(s, ps), cm, topo, s.site)


def calibration_ratio(ps: ProfileStore) -> float | None:
    ratios = [sp.measured / sp.estimated for sp in ps.slices.values()
              if sp.measured is not None and sp.estimated > 0]
    if not ratios:
        return None
    r = sum(ratios) / len(ratios)
    return min(max(r, CLAMP[0]), CLAMP[1])


def update_cost_model(ps: ProfileStore, cm: CostModel) -> CostModel:
    """Scale hop latency and near-core CPI by the clamped mean measured/estimated ratio."""
    r = calibration_ratio(ps)
    if r is None or r == 1.0:
        return cm
    return replace(cm, hop_latency=cm.hop_latency * r,
                   near_cpi=max(cm.near_cpi * r, cm.host_cpi))


@dataclass(frozen=True)
class SiteDecision:
    slice_id: int
    old_site: str
    new_site: str
    estimate: float
    measured: float | None

    def log_line(self, round_no: int) -> str:
        m = "-" if self.measured is None else f"{self.measured:.1f}"
        return f"{round_no}, {self.slice_id}, {self.old_site}, {self.new_site}, {self.estimate:.1f}, {m}"


def adapt(op: OffloadedProgram, ps: ProfileStore, cm: CostModel, topo: Topology,
          decisions: list[SiteDecision] | None = None) -> OffloadedProgram:
    """Re-place every slice under ``cm``; revert slices slower than inline host execution."""
    if not op.all_slices:
        return op
    topo = topo.with_ownership(op.source)
    hs = host_site(topo)
    placed = []
    for s in op.all_slices:
        sp = ps.slices.get(s.id)
        s = profiled(s, ps)
        host_est = estimate_window(s, cm, topo, hs)
        if s.site == hs and sp is not None:
            site = hs                      # reverted slices stay inline
        elif sp is not None and sp.measured is not None and sp.measured > host_est:
            site = hs
        else:
            site = choose_site(s, cm, topo)
        est = estimate_window(s, cm, topo, site)
        placed.append(s.with_site(site, est))
        if decisions is not None:
            decisions.append(SiteDecision(s.id, str(s.site), str(site), est,
                                          sp.measured if sp else None))
    return rewrite_with_offload(op.source, tuple(placed))


@dataclass
class AdaptiveRun:
    reports: list[SimReport] = field(default_factory=list)
    programs: list[OffloadedProgram] = field(default_factory=list)
    cost_models: list[CostModel] = field(default_factory=list)
    profiles: list[dict] = field(default_factory=list)
    log: list[str] = field(default_factory=list)
    analyses: list[Analysis] = field(default_factory=list)


def adaptive_session(p: Program, mem: MemoryImage, topo: Topology, cm: CostModel,
                     cc: CoreConfig | None = None, rounds: int = 4, *,
                     estimate: CostModel | None = None, seed: int = 0, inputs=None,
                     check_oracle: bool = True,
                     workload: Callable[[int], tuple[Program, MemoryImage]] | None = None,
                     batching: bool = True, alpha: float = ALPHA) -> AdaptiveRun:
    """Run ``rounds`` profile/recalibrate/adapt rounds.

    ``cm`` is the machine being simulated; ``estimate`` is the analyzer's
    initial belief about it (defaults to ``cm``). ``workload(r)`` may supply a
    different program for round ``r`` (0-based); a changed program is
    re-analyzed under the calibrated model.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    belief = estimate or cm
    run = AdaptiveRun()
    ps = ProfileStore(alpha)
    current, cur_mem = p, mem
    a = analyze(current, topo, belief, batching=batching)
    run.analyses.append(a)
    op = a.offloaded
    for r in range(rounds):
        if r > 0 and workload is not None:
            nxt, nxt_mem = workload(r)
            if nxt != current:
                a = analyze(nxt, topo, belief, batching=batching)
                run.analyses.append(a)
                op = a.offloaded
            current, cur_mem = nxt, nxt_mem
        report = simulate(op, cur_mem, topo, cm, cc, seed, inputs=inputs, check_oracle=check_oracle)
        report.mode = "adaptive"
        run.reports.append(report)
        run.programs.append(op)
        run.cost_models.append(belief)
        record(ps, report, {s.id: s.anchor_label for s in op.all_slices})
        refresh_estimates(ps, op, belief, topo)
        run.profiles.append(ps.to_dict())
        if r == rounds - 1:
            break
        belief = update_cost_model(ps, belief)
        decisions: list[SiteDecision] = []
        op = adapt(op, ps, belief, topo, decisions)
        run.log.extend(d.log_line(r + 1) for d in decisions)
    return run


def run_adaptive(p: Program, mem: MemoryImage, topo: Topology, cm: CostModel,
                 cc: CoreConfig | None = None, rounds: int = 4, **kw) -> list[SimReport]:
    return adaptive_session(p, mem, topo, cm, cc, rounds, **kw).reports


def estimate_errors(report: SimReport) -> dict[int, float]:
    """Relative |estimated - measured| / measured per slice id (mean measured window)."""
    out: dict[int, float] = {}
    ids = sorted({row["id"] for row in report.slices})
    for sid in ids:
        rows = [row for row in report.slices if row["id"] == sid]
        measured = sum(row["window"] for row in rows) / len(rows)
        if measured > 0:
            out[sid] = abs(rows[0]["est_window"] - measured) / measured
    return out
