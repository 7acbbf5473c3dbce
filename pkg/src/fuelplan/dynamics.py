"""Deterministic age/risk evaluation of a treatment schedule.

``simulate`` is the reference evaluator every solver and model is checked
against.  ``BatchEvaluator`` computes the same quantities for many
schedules at once with numpy; it backs exhaustive enumeration and the
heuristic's neighbourhood scans.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .landscape import Edge, Landscape, natural_key

BUDGET_TOL = 1e-9


class ScheduleError(ValueError):
    pass


def within_budget(used: float, budget: float) -> bool:
    return used <= budget + BUDGET_TOL * max(1.0, abs(budget))


@dataclass(frozen=True)
class Schedule:
    """Treated (unit, period) pairs over periods ``1..horizon``."""

    treated: frozenset[tuple[str, int]]
    horizon: int

    @classmethod
    def empty(cls, horizon: int) -> "Schedule":
        return cls(frozenset(), horizon)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, int]], horizon: int) -> "Schedule":
        return cls(frozenset((str(u), int(t)) for u, t in pairs), horizon)

    def x(self, unit_id: str, t: int) -> bool:
        return (unit_id, t) in self.treated

    def units_in(self, t: int) -> list[str]:
        return sorted((u for u, s in self.treated if s == t), key=natural_key)

    def pairs(self) -> list[tuple[str, int]]:
        return sorted(self.treated, key=lambda p: (p[1], natural_key(p[0])))

    def restricted(self, horizon: int) -> "Schedule":
        return Schedule(frozenset(p for p in self.treated if p[1] <= horizon), horizon)

    def shifted(self, offset: int, horizon: int) -> "Schedule":
        return Schedule(frozenset((u, t + offset) for u, t in self.treated), horizon)

    def __len__(self) -> int:
        return len(self.treated)


def check_schedule(landscape: Landscape, schedule: Schedule) -> None:
    for u, t in schedule.treated:
        if u not in landscape.units:
            raise ScheduleError(f"schedule references unknown unit {u}")
        if not landscape.units[u].treatable:
            raise ScheduleError(f"schedule treats untreatable unit {u}")
        if not 1 <= t <= schedule.horizon:
            raise ScheduleError(f"period {t} outside 1..{schedule.horizon}")


def write_schedule_csv(schedule: Schedule, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "t"])
        for u, t in schedule.pairs():
            w.writerow([u, t])


def read_schedule_csv(path: str | Path, horizon: int) -> Schedule:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Schedule.from_pairs(((r["unit_id"], int(r["t"])) for r in rows), horizon)


@dataclass(frozen=True)
class StateTrajectory:
    """Per-period state; column ``t`` of each array is period ``t`` (0..T)."""

    patch_ids: tuple[str, ...]
    unit_ids: tuple[str, ...]
    edges: tuple[Edge, ...]
    age: np.ndarray
    risk_patch: np.ndarray
    young: np.ndarray
    old: np.ndarray
    risk_unit: np.ndarray
    risk_conn: np.ndarray
    _pidx: Mapping[str, int] = field(repr=False, compare=False, default_factory=dict)
    _uidx: Mapping[str, int] = field(repr=False, compare=False, default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.age.shape[1] - 1

    def age_of(self, patch_id: str, t: int) -> int:
        return int(self.age[self._pidx[patch_id], t])

    def is_risky_patch(self, patch_id: str, t: int) -> bool:
        return bool(self.risk_patch[self._pidx[patch_id], t])

    def is_young(self, patch_id: str, t: int) -> bool:
        return bool(self.young[self._pidx[patch_id], t])

    def is_old(self, patch_id: str, t: int) -> bool:
        return bool(self.old[self._pidx[patch_id], t])

    def is_risky_unit(self, unit_id: str, t: int) -> bool:
        return bool(self.risk_unit[self._uidx[unit_id], t])

    def final_ages(self) -> dict[str, int]:
        return {p: int(self.age[k, -1]) for k, p in enumerate(self.patch_ids)}

    def connection_counts(self) -> list[int]:
        return [int(c) for c in self.risk_conn.sum(axis=0)]


def simulate(landscape: Landscape, schedule: Schedule) -> StateTrajectory:
    """Ages, risk and TFI status of every patch for periods ``0..horizon``."""
    check_schedule(landscape, schedule)
    T = schedule.horizon
    pids = landscape.patch_ids
    uids = landscape.unit_ids
    ages: dict[str, list[int]] = {p: [landscape.patches[p].initial_age] for p in pids}
    for t in range(1, T + 1):
        for p in pids:
            unit = landscape.patches[p].unit_id
            if schedule.x(unit, t):
                ages[p].append(0)
            else:
                ages[p].append(ages[p][-1] + 1)

    age = np.array([ages[p] for p in pids], dtype=np.int64).reshape(len(pids), T + 1)
    d = np.array([landscape.veg_of(p).risk_threshold for p in pids])[:, None]
    lo = np.array([landscape.veg_of(p).min_tfi for p in pids])[:, None]
    hi = np.array([landscape.veg_of(p).max_tfi for p in pids])[:, None]
    risk_patch = age >= d
    young = age < lo
    old = age >= hi

    pidx = {p: k for k, p in enumerate(pids)}
    risk_unit = np.zeros((len(uids), T + 1), dtype=bool)
    for k, u in enumerate(uids):
        members = landscape.units[u].patches
        total = math.fsum(landscape.patches[p].area for p in members)
        for t in range(T + 1):
            risky = math.fsum(landscape.patches[p].area for p in members if risk_patch[pidx[p], t])
            risk_unit[k, t] = risky > landscape.H * total

    uidx = {u: k for k, u in enumerate(uids)}
    edges = landscape.edge_list
    risk_conn = np.zeros((len(edges), T + 1), dtype=bool)
    for k, (i, j) in enumerate(edges):
        risk_conn[k] = risk_unit[uidx[i]] & risk_unit[uidx[j]]

    return StateTrajectory(pids, uids, edges, age, risk_patch, young, old, risk_unit, risk_conn, pidx, uidx)


@dataclass(frozen=True)
class Violation:
    tag: str  # "budget", "young", "must_treat"
    unit: str | None
    t: int


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    violations: tuple[Violation, ...]

    def __bool__(self) -> bool:
        return self.ok


def is_feasible(
    landscape: Landscape,
    schedule: Schedule,
    trajectory: StateTrajectory | None = None,
    *,
    tfi: bool = True,
) -> Feasibility:
    """Budget, young-blocks-treatment and old-forces-treatment checks.

    With ``tfi=False`` only the budget is checked, as in the backlog phase.
    """
    traj = trajectory if trajectory is not None else simulate(landscape, schedule)
    out: list[Violation] = []
    budget = landscape.budget
    for t in range(1, schedule.horizon + 1):
        used = math.fsum(landscape.units[u].area_c for u in schedule.units_in(t))
        if not within_budget(used, budget):
            out.append(Violation("budget", None, t))
        if not tfi:
            continue
        for u in landscape.treatable_ids:
            members = landscape.units[u].patches
            any_young = any(traj.is_young(p, t - 1) for p in members)
            any_old = any(traj.is_old(p, t - 1) for p in members)
            treated = schedule.x(u, t)
            if treated and any_young:
                out.append(Violation("young", u, t))
            if any_old and not any_young and not treated:
                out.append(Violation("must_treat", u, t))
    return Feasibility(not out, tuple(out))


def objective_phase2(landscape: Landscape, trajectory: StateTrajectory) -> float:
    """Weighted count of risky connections summed over periods 1..T."""
    w = np.array([landscape.edges[e] for e in trajectory.edges], dtype=float)
    if not len(w):
        return 0.0
    per_edge = trajectory.risk_conn[:, 1:].sum(axis=1)
    return math.fsum(float(a) * float(b) for a, b in zip(w, per_edge) if b)


def connectivity_series(landscape: Landscape, trajectory: StateTrajectory) -> tuple[list[int], list[float]]:
    """Unweighted and weighted risky-connection totals for t = 0..T."""
    w = [landscape.edges[e] for e in trajectory.edges]
    counts, weighted = [], []
    for t in range(trajectory.horizon + 1):
        col = trajectory.risk_conn[:, t]
        counts.append(int(col.sum()))
        weighted.append(math.fsum(wk for wk, c in zip(w, col) if c))
    return counts, weighted


def theta_set(landscape: Landscape) -> frozenset[str]:
    """Treatable units that hold an old (or next-year old) patch and no young patch."""
    out = set()
    for u in landscape.treatable_ids:
        members = [landscape.patches[p] for p in landscape.units[u].patches]
        near_old = any(p.initial_age >= landscape.veg_classes[p.veg].max_tfi - 1 for p in members)
        none_young = all(p.initial_age >= landscape.veg_classes[p.veg].min_tfi for p in members)
        if near_old and none_young:
            out.add(u)
    return frozenset(out)


def default_eps(landscape: Landscape, scale: float = 1e-3) -> dict[str, float]:
    ids = landscape.treatable_ids or landscape.unit_ids
    eps = scale * min(landscape.units[u].area_c for u in ids)
    return {u: eps for u in landscape.unit_ids}


def objective_phase1(
    landscape: Landscape,
    schedule: Schedule,
    trajectory: StateTrajectory,
    theta: Iterable[str],
    eps: Mapping[str, float],
    N: int,
) -> float:
    """Backlog objective: area of backlog units treated minus a small connectivity penalty.

    An edge (i, j), stored with i < j, is penalised with ``eps[i]`` only when
    ``i`` is a backlog unit.
    """
    theta = set(theta)
    gain = math.fsum(
        landscape.units[u].area_c for u, t in schedule.treated if u in theta and t <= N
    )
    penalty = []
    for k, (i, j) in enumerate(trajectory.edges):
        if i in theta:
            hits = int(trajectory.risk_conn[k, 1 : N + 1].sum())
            if hits:
                penalty.append(eps[i] * hits)
    return gain - math.fsum(penalty)


def old_backlog_fraction(landscape: Landscape, ages: Mapping[str, int] | None = None, *, by: str = "area") -> float:
    """Share of treatable units holding an old patch and no young patch.

    ``by="area"`` weights units by area (share of R); ``by="count"`` counts units.
    """
    units = landscape.treatable_ids
    if not units:
        return 0.0
    hit = []
    for u in units:
        members = [landscape.patches[p] for p in landscape.units[u].patches]
        a = [ages[p.id] if ages is not None else p.initial_age for p in members]
        vegs = [landscape.veg_classes[p.veg] for p in members]
        old = any(x >= v.max_tfi for x, v in zip(a, vegs))
        young = any(x < v.min_tfi for x, v in zip(a, vegs))
        if old and not young:
            hit.append(u)
    if by == "count":
        return len(hit) / len(units)
    if by != "area":
        raise ValueError(f"unknown measure {by!r}")
    return math.fsum(landscape.units[u].area_c for u in hit) / landscape.R


def write_trajectory_csv(trajectory: StateTrajectory, patch_path: str | Path, unit_path: str | Path) -> None:
    with open(patch_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patch_id", "t", "age", "risk_patch", "young", "old"])
        for k, p in enumerate(trajectory.patch_ids):
            for t in range(trajectory.horizon + 1):
                w.writerow([p, t, int(trajectory.age[k, t]), int(trajectory.risk_patch[k, t]),
                            int(trajectory.young[k, t]), int(trajectory.old[k, t])])
    with open(unit_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "t", "risk_unit"])
        for k, u in enumerate(trajectory.unit_ids):
            for t in range(trajectory.horizon + 1):
                w.writerow([u, t, int(trajectory.risk_unit[k, t])])


# --------------------------------------------------------------------------
# vectorised evaluation


@dataclass
class BatchResult:
    phase2: np.ndarray        # (B,) weighted connectivity over 1..T
    phase1: np.ndarray        # (B,) backlog objective over 1..T
    budget_ok: np.ndarray     # (B,)
    tfi_ok: np.ndarray        # (B,)
    final_age: np.ndarray     # (B, P)

    @property
    def feasible(self) -> np.ndarray:
        return self.budget_ok & self.tfi_ok


class BatchEvaluator:
    """Evaluate stacks of schedules given as boolean arrays ``X[b, k, t-1]``.

    ``k`` indexes ``landscape.treatable_ids``; column ``t-1`` is period ``t``.
    """

    def __init__(self, landscape: Landscape, horizon: int | None = None,
                 theta: Iterable[str] | None = None, eps: Mapping[str, float] | None = None):
        self.landscape = landscape
        self.T = landscape.horizon_T if horizon is None else horizon
        ls = landscape
        self.units = ls.unit_ids
        self.treatable = ls.treatable_ids
        uidx = {u: k for k, u in enumerate(self.units)}
        tidx = {u: k for k, u in enumerate(self.treatable)}
        pids = ls.patch_ids
        self.patch_ids = pids
        self.age0 = np.array([ls.patches[p].initial_age for p in pids], dtype=np.int64)
        self.d = np.array([ls.veg_of(p).risk_threshold for p in pids])
        self.lo = np.array([ls.veg_of(p).min_tfi for p in pids])
        self.hi = np.array([ls.veg_of(p).max_tfi for p in pids])
        area = np.array([ls.patches[p].area for p in pids])
        self.punit = np.array([uidx[ls.patches[p].unit_id] for p in pids])
        self.ptreat = np.array([tidx.get(ls.patches[p].unit_id, -1) for p in pids])
        nP, nU, nK = len(pids), len(self.units), len(self.treatable)
        self.area_mat = np.zeros((nP, nU))
        self.area_mat[np.arange(nP), self.punit] = area
        self.unit_total = self.area_mat.sum(axis=0)
        self.member_t = np.zeros((nP, nK), dtype=np.int64)
        sel = self.ptreat >= 0
        self.member_t[np.arange(nP)[sel], self.ptreat[sel]] = 1
        self.c = np.array([ls.units[u].area_c for u in self.treatable])
        self.budget = ls.budget
        edges = ls.edge_list
        self.ei = np.array([uidx[i] for i, _ in edges], dtype=np.int64)
        self.ej = np.array([uidx[j] for _, j in edges], dtype=np.int64)
        self.w = np.array([ls.edges[e] for e in edges], dtype=float)
        theta = set(theta or ())
        self.theta_mask = np.array([u in theta for u in self.treatable], dtype=bool)
        eps = eps or {}
        self.eps_edge = np.array([eps.get(i, 0.0) if i in theta else 0.0 for i, _ in edges])

    def run(self, X: np.ndarray, *, tfi: bool = True) -> BatchResult:
        X = np.asarray(X, dtype=bool)
        if X.ndim == 2:
            X = X[None]
        B = X.shape[0]
        T = self.T
        assert X.shape[1:] == (len(self.treatable), T), X.shape
        age = np.broadcast_to(self.age0, (B, len(self.age0))).copy()
        phase2 = np.zeros(B)
        penalty = np.zeros(B)
        tfi_ok = np.ones(B, dtype=bool)
        budget_ok = np.ones(B, dtype=bool)
        limit = self.budget + BUDGET_TOL * max(1.0, abs(self.budget))
        has_t = self.ptreat >= 0
        pt = np.where(has_t, self.ptreat, 0)
        for t in range(1, T + 1):
            xt = X[:, :, t - 1]
            budget_ok &= (xt @ self.c) <= limit
            if tfi and len(self.treatable):
                young_u = ((age < self.lo).astype(np.int64) @ self.member_t) > 0
                old_u = ((age >= self.hi).astype(np.int64) @ self.member_t) > 0
                tfi_ok &= ~(xt & young_u).any(axis=1)
                tfi_ok &= ~(old_u & ~young_u & ~xt).any(axis=1)
            if len(self.treatable):
                age = np.where(xt[:, pt] & has_t, 0, age + 1)
            else:
                age = age + 1
            risky_area = (age >= self.d) @ self.area_mat
            risk_u = risky_area > self.landscape.H * self.unit_total
            conn = risk_u[:, self.ei] & risk_u[:, self.ej]
            phase2 += conn @ self.w
            penalty += conn @ self.eps_edge
        gain = X[:, self.theta_mask, :].sum(axis=2) @ self.c[self.theta_mask] if self.theta_mask.any() else np.zeros(B)
        return BatchResult(phase2, gain - penalty, budget_ok, tfi_ok, age)

    def ages_at(self, X: np.ndarray, t: int) -> np.ndarray:
        """Patch ages at period ``t`` for a single schedule array."""
        X = np.asarray(X, dtype=bool)
        has_t = self.ptreat >= 0
        pt = np.where(has_t, self.ptreat, 0)
        age = self.age0.copy()
        for s in range(1, t + 1):
            age = np.where(X[pt, s - 1] & has_t, 0, age + 1) if len(self.treatable) else age + 1
        return age

    def unit_status(self, age: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(any young patch, any old patch) per treatable unit."""
        young = ((age < self.lo).astype(np.int64) @ self.member_t) > 0
        old = ((age >= self.hi).astype(np.int64) @ self.member_t) > 0
        return young, old

    def to_array(self, schedule: Schedule) -> np.ndarray:
        X = np.zeros((len(self.treatable), self.T), dtype=bool)
        k = {u: n for n, u in enumerate(self.treatable)}
        for u, t in schedule.treated:
            if t <= self.T:
                X[k[u], t - 1] = True
        return X

    def to_schedule(self, X: np.ndarray) -> Schedule:
        ks, ts = np.nonzero(np.asarray(X, dtype=bool))
        return Schedule.from_pairs(((self.treatable[k], int(t) + 1) for k, t in zip(ks, ts)), self.T)
