"""Construction of the connectivity (phase 2) and backlog (phase 1) models.

Variable names follow a fixed scheme so external solutions can be joined
back to the landscape::

    x_<unit>_<t>           treat unit in period t
    A_<patch>_<t>          vegetation age (continuous)
    Riskpatch_<patch>_<t>  patch at or above its risk threshold
    Risk_<unit>_<t>        unit classified high-risk
    RiskConn_<i>_<j>_<t>   both endpoints of edge (i, j) high-risk
    Old_<patch>_<t>        patch at or above max TFI
    Young_<patch>_<t>      patch below min TFI

Identifiers are passed through :func:`token`, which replaces every
character outside ``[A-Za-z0-9_.]`` with ``_``.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

from ..dynamics import Schedule, default_eps, simulate, theta_set
from ..landscape import Landscape
from .model import Constraint, MipModel, ModelError, Variable

BIG_M_CAP = 1e9

_UNSAFE = re.compile(r"[^A-Za-z0-9_.]")


def token(ident: str) -> str:
    return _UNSAFE.sub("_", str(ident))


def x_name(u: str, t: int) -> str:
    return f"x_{token(u)}_{t}"


def age_name(p: str, t: int) -> str:
    return f"A_{token(p)}_{t}"


def riskpatch_name(p: str, t: int) -> str:
    return f"Riskpatch_{token(p)}_{t}"


def risk_name(u: str, t: int) -> str:
    return f"Risk_{token(u)}_{t}"


def conn_name(i: str, j: str, t: int) -> str:
    return f"RiskConn_{token(i)}_{token(j)}_{t}"


def old_name(p: str, t: int) -> str:
    return f"Old_{token(p)}_{t}"


def young_name(p: str, t: int) -> str:
    return f"Young_{token(p)}_{t}"


@dataclass(frozen=True)
class BigMPlan:
    """Per-instance big-M constants, keyed by (patch, t) or unit.

    With ``amax = initial_age + t`` the largest reachable age::

        reset_lb = reset_ub = amax + 1
        risk     = amax - threshold + 1
        unit     = total patch area of the unit
        old      = amax - max_tfi + 1
        young_lb = min_tfi
        young_ub = amax - min_tfi + 1

    Values are floored at 1.
    """

    reset: Mapping[tuple[str, int], float]
    risk: Mapping[tuple[str, int], float]
    unit: Mapping[str, float]
    old: Mapping[tuple[str, int], float]
    young_lb: Mapping[str, float]
    young_ub: Mapping[tuple[str, int], float]

    def largest(self) -> float:
        pools = [self.reset, self.risk, self.unit, self.old, self.young_lb, self.young_ub]
        return max((max(p.values()) for p in pools if p), default=0.0)


def plan_big_m(landscape: Landscape, horizon: int) -> BigMPlan:
    reset, risk, old, young_ub = {}, {}, {}, {}
    young_lb, unit = {}, {}
    for pid, p in landscape.patches.items():
        v = landscape.veg_classes[p.veg]
        young_lb[pid] = float(max(1, v.min_tfi))
        for t in range(0, horizon + 1):
            amax = p.initial_age + t
            reset[pid, t] = float(amax + 1)
            risk[pid, t] = float(max(1, amax - v.risk_threshold + 1))
            old[pid, t] = float(max(1, amax - v.max_tfi + 1))
            young_ub[pid, t] = float(max(1, amax - v.min_tfi + 1))
    for uid in landscape.unit_ids:
        unit[uid] = max(1.0, landscape.patch_area_total(uid))
    plan = BigMPlan(reset, risk, unit, old, young_lb, young_ub)
    if plan.largest() > BIG_M_CAP:
        raise ModelError(f"big-M {plan.largest():.3g} exceeds numeric safety cap {BIG_M_CAP:.0e}")
    return plan


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.vars: dict[str, Variable] = {}
        self.rows: list[Constraint] = []
        self.row_names: set[str] = set()

    def var(self, name: str, kind: str = "binary", lb: float = 0.0, ub: float = math.inf) -> str:
        if name in self.vars:
            raise ModelError(f"variable name collision: {name}")
        self.vars[name] = Variable(name, kind, 0.0 if kind == "binary" else lb, 1.0 if kind == "binary" else ub)
        return name

    def row(self, name: str, terms, sense: str, rhs: float) -> None:
        if name in self.row_names:
            raise ModelError(f"constraint name collision: {name}")
        acc: dict[str, float] = defaultdict(float)
        for v, c in terms:
            acc[v] += float(c)
        self.row_names.add(name)
        self.rows.append(Constraint(name, tuple((v, c) for v, c in acc.items() if c != 0.0), sense, float(rhs)))

    def model(self, sense: str, objective) -> MipModel:
        acc: dict[str, float] = defaultdict(float)
        for v, c in objective:
            acc[v] += float(c)
        obj = tuple((v, c) for v, c in acc.items() if c != 0.0)
        return MipModel(self.name, tuple(self.vars.values()), tuple(self.rows), sense, obj)


def _untreatable_risk(landscape: Landscape, uid: str, t: int) -> int:
    """Risk status of an untreatable unit, from ages that only grow."""
    members = [landscape.patches[p] for p in landscape.units[uid].patches]
    theta = math.fsum(
        p.area for p in members if p.initial_age + t >= landscape.veg_classes[p.veg].risk_threshold
    ) - landscape.H * math.fsum(p.area for p in members)
    return 1 if theta > 0 else 0


def _core(b: _Builder, landscape: Landscape, horizon: int, reduce: bool, plan: BigMPlan) -> None:
    """Budget, age dynamics, risk classification and connectivity rows."""
    ls = landscape
    T = horizon
    treatable = ls.treatable_ids
    for u in treatable:
        for t in range(1, T + 1):
            b.var(x_name(u, t))
    for t in range(1, T + 1):
        b.row(f"budget_{t}", [(x_name(u, t), ls.units[u].area_c) for u in treatable], "<=", ls.budget)

    tracked = [u for u in ls.unit_ids if ls.units[u].treatable or not reduce]
    for u in tracked:
        for p in ls.units[u].patches:
            for t in range(0, T + 1):
                b.var(age_name(p, t), "continuous", 0.0, math.inf)
            for t in range(1, T + 1):
                b.var(riskpatch_name(p, t))
    for u in ls.unit_ids:
        for t in range(1, T + 1):
            b.var(risk_name(u, t))
    for i, j in ls.edge_list:
        for t in range(1, T + 1):
            b.var(conn_name(i, j, t))

    for u in tracked:
        unit = ls.units[u]
        for p in unit.patches:
            patch = ls.patches[p]
            v = ls.veg_classes[patch.veg]
            b.row(f"init_{token(p)}", [(age_name(p, 0), 1)], "=", patch.initial_age)
            for t in range(1, T + 1):
                a_t, a_prev = age_name(p, t), age_name(p, t - 1)
                if unit.treatable:
                    x = x_name(u, t)
                    m = plan.reset[p, t]
                    b.row(f"agelb_{token(p)}_{t}", [(a_t, 1), (a_prev, -1), (x, m)], ">=", 1)
                    b.row(f"reset_{token(p)}_{t}", [(a_t, 1), (x, m)], "<=", m)
                    b.row(f"ageub_{token(p)}_{t}", [(a_t, 1), (a_prev, -1)], "<=", 1)
                else:
                    b.row(f"grow_{token(p)}_{t}", [(a_t, 1), (a_prev, -1)], "=", 1)
                b.row(
                    f"riskpatch_{token(p)}_{t}",
                    [(a_t, 1), (riskpatch_name(p, t), -plan.risk[p, t])],
                    "<=",
                    v.risk_threshold - 1,
                )
        total = ls.patch_area_total(u)
        for t in range(1, T + 1):
            terms = [(riskpatch_name(p, t), ls.patches[p].area) for p in unit.patches]
            terms.append((risk_name(u, t), -plan.unit[u]))
            b.row(f"riskunit_{token(u)}_{t}", terms, "<=", ls.H * total)

    if reduce:
        for u in ls.unit_ids:
            if ls.units[u].treatable:
                continue
            for t in range(1, T + 1):
                b.row(f"fixrisk_{token(u)}_{t}", [(risk_name(u, t), 1)], "=", _untreatable_risk(ls, u, t))

    for i, j in ls.edge_list:
        for t in range(1, T + 1):
            b.row(
                f"conn_{token(i)}_{token(j)}_{t}",
                [(risk_name(i, t), 1), (risk_name(j, t), 1), (conn_name(i, j, t), -1)],
                "<=",
                1,
            )


def _tfi_rows(b: _Builder, landscape: Landscape, horizon: int, plan: BigMPlan) -> None:
    ls = landscape
    T = horizon
    for u in ls.treatable_ids:
        unit = ls.units[u]
        for p in unit.patches:
            for t in range(0, T):
                b.var(old_name(p, t))
                b.var(young_name(p, t))
        for p in unit.patches:
            v = ls.veg_classes[ls.patches[p].veg]
            for t in range(0, T):
                a, o, y = age_name(p, t), old_name(p, t), young_name(p, t)
                b.row(f"oldub_{token(p)}_{t}", [(a, 1), (o, -plan.old[p, t])], "<=", v.max_tfi - 1)
                b.row(f"oldlb_{token(p)}_{t}", [(a, 1), (o, -v.max_tfi)], ">=", 0)
                b.row(f"younglb_{token(p)}_{t}", [(a, 1), (y, plan.young_lb[p])], ">=", v.min_tfi)
                m7 = plan.young_ub[p, t]
                b.row(f"youngub_{token(p)}_{t}", [(a, 1), (y, m7)], "<=", v.min_tfi - 1 + m7)
        n = len(unit.patches)
        for t in range(1, T + 1):
            for p in unit.patches:
                b.row(f"noyoung_{token(p)}_{t}", [(young_name(p, t - 1), 1), (x_name(u, t), 1)], "<=", 1)
            terms = [(old_name(p, t - 1), 1) for p in unit.patches]
            terms += [(young_name(p, t - 1), -n) for p in unit.patches]
            terms.append((x_name(u, t), -n))
            b.row(f"mustburn_{token(u)}_{t}", terms, "<=", 0)


def build_phase2(landscape: Landscape, reduce: bool = False, horizon: int | None = None) -> MipModel:
    """Minimise weighted risky connectivity subject to budget and TFI rules.

    With ``reduce=True`` untreatable units carry no age or patch-risk
    variables; their unit risk is fixed from precomputed ages.
    """
    T = landscape.horizon_T if horizon is None else horizon
    plan = plan_big_m(landscape, T)
    b = _Builder(f"{landscape.name or 'landscape'}_phase2{'_reduced' if reduce else ''}")
    _core(b, landscape, T, reduce, plan)
    _tfi_rows(b, landscape, T, plan)
    objective = [
        (conn_name(i, j, t), landscape.edges[(i, j)])
        for i, j in landscape.edge_list
        for t in range(1, T + 1)
    ]
    return b.model("min", objective)


def build_phase1(
    landscape: Landscape,
    N: int,
    eps: Mapping[str, float] | None = None,
    reduce: bool = False,
) -> MipModel:
    """Backlog-clearing model over ``N`` periods, without TFI rows.

    Maximises area of backlog units treated minus ``eps``-weighted
    connectivity on edges whose lower-ordered endpoint is a backlog unit.
    """
    if N < 1:
        raise ModelError("phase-1 horizon N must be >= 1")
    eps = default_eps(landscape) if eps is None else eps
    plan = plan_big_m(landscape, N)
    b = _Builder(f"{landscape.name or 'landscape'}_phase1_N{N}")
    _core(b, landscape, N, reduce, plan)
    theta = theta_set(landscape)
    objective = [
        (x_name(u, t), landscape.units[u].area_c)
        for u in sorted(theta, key=landscape.unit_ids.index)
        for t in range(1, N + 1)
    ]
    objective += [
        (conn_name(i, j, t), -eps[i])
        for i, j in landscape.edge_list
        if i in theta
        for t in range(1, N + 1)
    ]
    return b.model("max", objective)


def lift_assignment(landscape: Landscape, schedule: Schedule) -> dict[str, float]:
    """Values for every variable family implied by a schedule.

    Auxiliary indicators are set to their tight values from
    :func:`simulate`; the result covers any model built over the schedule's
    horizon and callers select the names a model declares.
    """
    traj = simulate(landscape, schedule)
    T = schedule.horizon
    out: dict[str, float] = {}
    for u in landscape.treatable_ids:
        for t in range(1, T + 1):
            out[x_name(u, t)] = 1.0 if schedule.x(u, t) else 0.0
    for p in landscape.patch_ids:
        for t in range(0, T + 1):
            out[age_name(p, t)] = float(traj.age_of(p, t))
            out[old_name(p, t)] = float(traj.is_old(p, t))
            out[young_name(p, t)] = float(traj.is_young(p, t))
            if t >= 1:
                out[riskpatch_name(p, t)] = float(traj.is_risky_patch(p, t))
    for u in landscape.unit_ids:
        for t in range(1, T + 1):
            out[risk_name(u, t)] = float(traj.is_risky_unit(u, t))
    for k, (i, j) in enumerate(traj.edges):
        for t in range(1, T + 1):
            out[conn_name(i, j, t)] = float(traj.risk_conn[k, t])
    return out


def lift_for(model: MipModel, landscape: Landscape, schedule: Schedule) -> dict[str, float]:
    full = lift_assignment(landscape, schedule)
    return {v.name: full[v.name] for v in model.variables}


def schedule_from_assignment(
    landscape: Landscape, assignment: Mapping[str, float], horizon: int | None = None
) -> Schedule:
    """Treated pairs from ``x`` values rounded at 0.5."""
    T = landscape.horizon_T if horizon is None else horizon
    pairs = [
        (u, t)
        for u in landscape.treatable_ids
        for t in range(1, T + 1)
        if assignment.get(x_name(u, t), 0.0) >= 0.5
    ]
    return Schedule.from_pairs(pairs, T)
