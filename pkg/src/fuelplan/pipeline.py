"""Two-phase planning runs, level comparisons, synthetic landscapes and reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (
    Schedule,
    connectivity_series,
    old_backlog_fraction,
    simulate,
    write_schedule_csv,
)
from .landscape import Landscape, LandscapeError, VegClass, build_landscape, strip_layout
from .search import DEFAULT_NODE_CAP, Phase1, SearchResult, find_feasible, solve

log = logging.getLogger(__name__)

DEFAULT_N_MAX = 15


class PipelineError(RuntimeError):
    pass


class InfeasibleError(PipelineError):
    pass


class Phase1LimitError(PipelineError):
    pass


# --------------------------------------------------------------------------
# stop rules


@dataclass(frozen=True)
class Phase2Feasible:
    def __str__(self) -> str:
        return "phase2_feasible"


@dataclass(frozen=True)
class OldFractionBelow:
    f: float
    by: str = "area"

    def __str__(self) -> str:
        return f"old_fraction_below({self.f:g})" + ("" if self.by == "area" else f"[{self.by}]")


_RULE = re.compile(r"old_fraction_below\(\s*([0-9.eE+-]+)\s*\)")


def parse_stop_rule(text: str, by: str = "area") -> Phase2Feasible | OldFractionBelow:
    text = text.strip()
    if text == "phase2_feasible":
        return Phase2Feasible()
    m = _RULE.fullmatch(text)
    if m:
        return OldFractionBelow(float(m.group(1)), by)
    raise ValueError(f"unknown stop rule {text!r}; use phase2_feasible or old_fraction_below(f)")


# --------------------------------------------------------------------------
# reports


@dataclass
class PlanReport:
    """Per-period series recomputed from the landscape and schedule alone.

    Series are keyed by period ``t = 1..T``; the ``initial_*`` fields hold
    the untreated state at ``t = 0``.
    """

    rho: float
    budget: float
    horizon: int
    phase2_schedule: Schedule
    connectivity_series: dict[int, int]
    weighted_series: dict[int, float]
    treated_area_series: dict[int, float]
    risk_maps: dict[int, dict[str, dict[str, bool]]]
    initial_connectivity: int = 0
    initial_weighted: float = 0.0
    phase1_horizon_N: int = 0
    phase1_schedule: Schedule = field(default_factory=lambda: Schedule.empty(0))
    solver: str = ""
    status: str = ""
    nodes: int = 0
    wall_time: float = 0.0

    @property
    def objective(self) -> float:
        return math.fsum(self.weighted_series.values())

    @property
    def mean_connectivity(self) -> float:
        vals = list(self.connectivity_series.values())
        return sum(vals) / len(vals) if vals else 0.0

    def summary(self) -> dict:
        return {
            "rho": self.rho,
            "budget": self.budget,
            "T": self.horizon,
            "solver": self.solver,
            "status": self.status,
            "objective": self.objective,
            "mean_connectivity": self.mean_connectivity,
            "treatments": len(self.phase2_schedule),
            "phase1_N": self.phase1_horizon_N,
            "nodes": self.nodes,
            "time_s": round(self.wall_time, 6),
        }


def make_report(landscape: Landscape, schedule: Schedule, result: SearchResult | None = None) -> PlanReport:
    traj = simulate(landscape, schedule)
    counts, weighted = connectivity_series(landscape, traj)
    T = schedule.horizon
    area = {t: math.fsum(landscape.units[u].area_c for u in schedule.units_in(t)) for t in range(1, T + 1)}
    maps = {}
    for t in range(T + 1):
        maps[t] = {u: {"risk": traj.is_risky_unit(u, t), "treated": schedule.x(u, t)} for u in landscape.unit_ids}
    rep = PlanReport(
        rho=landscape.rho,
        budget=landscape.budget,
        horizon=T,
        phase2_schedule=schedule,
        connectivity_series={t: counts[t] for t in range(1, T + 1)},
        weighted_series={t: weighted[t] for t in range(1, T + 1)},
        treated_area_series=area,
        risk_maps=maps,
        initial_connectivity=counts[0],
        initial_weighted=weighted[0],
    )
    if result is not None:
        rep.solver, rep.status = result.solver, result.status
        rep.nodes, rep.wall_time = result.nodes_explored, result.wall_time
    return rep


# --------------------------------------------------------------------------
# phases


@dataclass
class Phase1Outcome:
    N: int
    schedule: Schedule
    landscape: Landscape
    history: list[tuple[int, float]] = field(default_factory=list)

    def __iter__(self):
        return iter((self.N, self.schedule, self.landscape))


def _rule_holds(rule, landscape: Landscape, solver: str, seed: int, node_cap: int) -> tuple[bool, float]:
    if isinstance(rule, OldFractionBelow):
        frac = old_backlog_fraction(landscape, by=rule.by)
        return frac < rule.f, frac
    res = find_feasible(landscape, solver, seed=seed, node_cap=node_cap)
    return res.ok, old_backlog_fraction(landscape)


def run_phase1(
    landscape: Landscape,
    solver: str = "bnb",
    N_max: int = DEFAULT_N_MAX,
    stop_rule: Phase2Feasible | OldFractionBelow | str = Phase2Feasible(),
    *,
    seed: int = 0,
    node_cap: int = DEFAULT_NODE_CAP,
) -> Phase1Outcome:
    """Grow the backlog horizon ``N`` until the stop rule holds.

    Each ``N`` is solved from scratch on the original landscape.  The
    returned landscape carries the end-of-phase ages as its initial ages.
    """
    if N_max < 1:
        raise ValueError("N_max must be at least 1")
    rule = parse_stop_rule(stop_rule) if isinstance(stop_rule, str) else stop_rule
    ok, frac = _rule_holds(rule, landscape, solver, seed, node_cap)
    history = [(0, frac)]
    if ok:
        return Phase1Outcome(0, Schedule.empty(0), landscape, history)
    for N in range(1, N_max + 1):
        res = solve(landscape, solver, Phase1(N), seed=seed, node_cap=node_cap)
        if not res.ok:
            raise PipelineError(f"backlog solve failed at N={N}: {res.status}")
        traj = simulate(landscape, res.schedule)
        aged = landscape.with_ages(traj.final_ages())
        ok, frac = _rule_holds(rule, aged, solver, seed, node_cap)
        history.append((N, frac))
        log.info("phase1 N=%d old fraction %.4f rule %s", N, frac, "met" if ok else "not met")
        if ok:
            return Phase1Outcome(N, res.schedule, aged, history)
    raise Phase1LimitError(f"stop rule {rule} not met within N_max={N_max} (last old fraction {frac:.4f})")


def run_phase2(
    landscape: Landscape,
    solver: str = "bnb",
    *,
    seed: int = 0,
    node_cap: int = DEFAULT_NODE_CAP,
) -> tuple[Schedule, PlanReport]:
    res = solve(landscape, solver, seed=seed, node_cap=node_cap)
    if not res.ok:
        hint = "; run phase1 first to clear the old-vegetation backlog" if res.status == "infeasible" else ""
        raise InfeasibleError(f"no feasible schedule ({res.status}){hint}")
    return res.schedule, make_report(landscape, res.schedule, res)


def run_plan(
    landscape: Landscape,
    solver: str = "bnb",
    *,
    N_max: int = DEFAULT_N_MAX,
    stop_rule="phase2_feasible",
    seed: int = 0,
    node_cap: int = DEFAULT_NODE_CAP,
) -> PlanReport:
    """Phase 1 (when needed) followed by phase 2 on the aged landscape."""
    p1 = run_phase1(landscape, solver, N_max, stop_rule, seed=seed, node_cap=node_cap)
    _, rep = run_phase2(p1.landscape, solver, seed=seed, node_cap=node_cap)
    rep.phase1_horizon_N, rep.phase1_schedule = p1.N, p1.schedule
    return rep


def _level_job(args) -> PlanReport:
    landscape, level, solver, seed, node_cap = args
    return run_phase2(landscape.with_params(rho=level), solver, seed=seed, node_cap=node_cap)[1]


def compare_levels(
    landscape: Landscape,
    levels: Sequence[float],
    solver: str = "bnb",
    *,
    seed: int = 0,
    node_cap: int = DEFAULT_NODE_CAP,
    workers: int = 1,
) -> tuple[list[PlanReport], list[dict]]:
    """Phase-2 reports for each treatment level, plus one summary row per level."""
    if not levels:
        raise ValueError("levels must be non-empty")
    jobs = [(landscape, float(lv), solver, seed, node_cap) for lv in levels]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_level_job, jobs))
    else:
        reports = [_level_job(j) for j in jobs]
    table = [
        {"level": r.rho, "objective": r.objective, "mean_connectivity": r.mean_connectivity,
         "status": r.status, "treated_area": math.fsum(r.treated_area_series.values())}
        for r in reports
    ]
    return reports, table


# --------------------------------------------------------------------------
# synthetic landscapes


@lru_cache(maxsize=1)
def case_study_veg() -> tuple[VegClass, ...]:
    """The bundled forty-class vegetation table."""
    text = resources.files("fuelplan").joinpath("data/case_study_veg.csv").read_text()
    rows = csv.DictReader(text.splitlines())
    return tuple(VegClass(r["code"], r["name"], int(r["min_tfi"]), int(r["max_tfi"]), int(r["risk_threshold"]))
                 for r in rows)


def _compositions(rng: np.random.Generator, n: int, total: int) -> list[int]:
    cuts = sorted(rng.choice(np.arange(1, total), size=n - 1, replace=False)) if n > 1 else []
    edges = [0, *map(int, cuts), total]
    return [b - a for a, b in zip(edges, edges[1:])]


def generate_synthetic(
    units: int,
    veg_table: Sequence[VegClass] | None = None,
    seed: int = 0,
    old_fraction_target: float = 0.31,
    *,
    T: int = 5,
    rho: float = 0.07,
    H: float = 0.5,
    p_untreatable: float = 0.4,
    margin: int = DEFAULT_N_MAX + 1,
    tolerance: float = 0.05,
    name: str = "",
) -> Landscape:
    """Random connected strip landscape with a target old-backlog area share.

    Units not chosen for the backlog get ages at least ``margin`` years short
    of their maximum interval, so no new backlog appears for ``margin`` years.
    """
    if units < 1:
        raise ValueError("units must be at least 1")
    vegs = tuple(veg_table) if veg_table is not None else case_study_veg()
    rng = np.random.default_rng(seed)
    ids = [str(k) for k in range(1, units + 1)]
    per_row = max(1, math.ceil(math.sqrt(units)))
    width = 3 * per_row
    rows = []
    for r in range(0, units, per_row):
        chunk = ids[r : r + per_row]
        rows.append(list(zip(chunk, _compositions(rng, len(chunk), width))))
    geometry = strip_layout(rows)

    treatable = {u: bool(rng.random() >= p_untreatable) for u in ids}
    if not any(treatable.values()):
        treatable[ids[int(rng.integers(units))]] = True
    patch_specs = {}
    for u in ids:
        k = int(rng.integers(1, 4))
        patch_specs[u] = [(vegs[int(rng.integers(len(vegs)))], float(rng.integers(2, 40))) for _ in range(k)]
    tids = [u for u in ids if treatable[u]]
    # every treatable unit must fit inside one year's budget
    for _ in range(50):
        area = {u: math.fsum(a for _, a in patch_specs[u]) for u in ids}
        R = math.fsum(area[u] for u in tids)
        big = [u for u in tids if area[u] > rho * R]
        if not big or len(tids) == 1:
            break
        for u in big:
            scale = 0.9 * rho * R / area[u]
            patch_specs[u] = [(v, max(0.1, math.floor(a * scale * 10) / 10)) for v, a in patch_specs[u]]

    backlog: set[str] = set()
    share = 0.0
    for u in rng.permutation(tids):
        a = area[u] / R
        if abs(share + a - old_fraction_target) < abs(share - old_fraction_target):
            backlog.add(str(u))
            share += a
    if abs(share - old_fraction_target) > tolerance:
        raise LandscapeError(f"cannot reach old fraction {old_fraction_target} (best {share:.3f})")

    def calm_age(v: VegClass) -> int:
        cap = max(0, v.max_tfi - 1 - margin)
        return int(rng.integers(0, min(cap, 2 * max(v.risk_threshold, v.min_tfi) + 5) + 1))

    unit_rows = []
    for u in ids:
        patches = []
        specs = patch_specs[u]
        old_slot = int(rng.integers(len(specs)))
        for k, (v, a) in enumerate(specs):
            if u in backlog and k == old_slot:
                age = int(rng.integers(v.max_tfi, v.max_tfi + 11))
            elif u in backlog:
                age = int(rng.integers(v.min_tfi, max(v.min_tfi, v.max_tfi - 1 - margin) + 1))
            else:
                age = calm_age(v)
            patches.append({"id": f"{u}-{k + 1}", "veg": v.code, "area": a, "age": age})
        unit_rows.append({"id": u, "patches": patches, "treatable": treatable[u]})
    used = {p["veg"] for row in unit_rows for p in row["patches"]}
    ls = build_landscape([v for v in vegs if v.code in used], unit_rows, T=T, rho=rho, H=H,
                         geometry=geometry, name=name or f"synthetic-{units}-{seed}")
    frac = old_backlog_fraction(ls)
    if abs(frac - old_fraction_target) > tolerance:
        raise LandscapeError(f"generated old fraction {frac:.3f} misses target {old_fraction_target}")
    return ls


# --------------------------------------------------------------------------
# report directory


def _geojson(landscape: Landscape, labels: dict[str, dict[str, bool]], t: int) -> dict:
    feats = []
    for u in landscape.unit_ids:
        ring = [list(p) for p in landscape.geometry[u]]
        ring.append(ring[0])
        feats.append({
            "type": "Feature",
            "id": u,
            "properties": {"unit_id": u, "t": t, **labels[u]},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        })
    return {"type": "FeatureCollection", "features": feats}


def write_report(report: PlanReport, landscape: Landscape, out_dir: str | Path, *, figures: bool = True) -> list[Path]:
    """Write schedule, series, per-year GeoJSON maps, summary and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    write_schedule_csv(report.phase2_schedule, out / "schedule.csv")
    written.append(out / "schedule.csv")
    if len(report.phase1_schedule):
        write_schedule_csv(report.phase1_schedule, out / "phase1_schedule.csv")
        written.append(out / "phase1_schedule.csv")
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "connectivity", "weighted", "treated_area", "risky_units"])
        risky0 = sum(v["risk"] for v in report.risk_maps[0].values())
        w.writerow([0, report.initial_connectivity, repr(report.initial_weighted), "0", risky0])
        for t in range(1, report.horizon + 1):
            risky = sum(v["risk"] for v in report.risk_maps[t].values())
            w.writerow([t, report.connectivity_series[t], repr(report.weighted_series[t]),
                        repr(report.treated_area_series[t]), risky])
    written.append(out / "series.csv")
    if landscape.geometry is not None:
        for t, labels in report.risk_maps.items():
            path = out / f"status_t{t}.geojson"
            path.write_text(json.dumps(_geojson(landscape, labels, t)))
            written.append(path)
    lines = [f"{k}: {v}" for k, v in report.summary().items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    written.append(out / "summary.txt")
    if figures:
        from .plotting import plot_report

        written += plot_report(report, landscape, out)
    return written


def write_comparison(table: list[dict], out_dir: str | Path, *, figures: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "levels.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["level", "objective", "mean_connectivity", "treated_area", "status"])
        w.writeheader()
        for row in table:
            w.writerow(row)
    written = [path]
    if figures:
        from .plotting import plot_levels

        written.append(plot_levels(table, out / "levels.png"))
    return written
