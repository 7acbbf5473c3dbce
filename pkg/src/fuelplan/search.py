"""Internal solvers over the schedule space.

* :func:`solve_exhaustive` enumerates every schedule (small instances only).
* :func:`solve_bnb` is a depth-first branch-and-bound that branches on
  ``x[i, t]`` period by period.
* :func:`solve_greedy_ls` is a constructive greedy followed by first
  improvement local search.

All solvers report objectives recomputed by :mod:`fuelplan.dynamics`.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dynamics import (
    BUDGET_TOL,
    BatchEvaluator,
    Schedule,
    default_eps,
    is_feasible,
    objective_phase1,
    objective_phase2,
    simulate,
    theta_set,
)
from .landscape import Landscape

log = logging.getLogger(__name__)

EXHAUSTIVE_CAP = 24
DEFAULT_NODE_CAP = 1_000_000
IMPROVE_TOL = 1e-12

STATUSES = ("optimal", "feasible", "infeasible", "budget_exhausted_nodes")


class SearchCapError(ValueError):
    pass


@dataclass(frozen=True)
class Phase1:
    """Backlog phase over ``N`` periods; ``eps`` defaults to :func:`default_eps`."""

    N: int
    eps: Mapping[str, float] | None = None

    name = "phase1"


@dataclass(frozen=True)
class Phase2:
    name = "phase2"


PHASE2 = Phase2()


@dataclass
class SearchResult:
    schedule: Schedule
    objective: float
    status: str
    nodes_explored: int = 0
    wall_time: float = 0.0
    solver: str = ""
    phase: str = "phase2"
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def summary(self) -> dict:
        return {
            "solver": self.solver,
            "phase": self.phase,
            "status": self.status,
            "objective": self.objective,
            "nodes": self.nodes_explored,
            "time_s": round(self.wall_time, 6),
            "treatments": len(self.schedule),
            **self.extra,
        }

    def summary_text(self) -> str:
        return json.dumps(self.summary(), indent=1, sort_keys=True) + "\n"


class _Problem:
    """Shared setup for one (landscape, phase) pair."""

    def __init__(self, landscape: Landscape, phase):
        self.landscape = landscape
        self.phase = phase
        self.is_p1 = isinstance(phase, Phase1)
        self.T = phase.N if self.is_p1 else landscape.horizon_T
        if self.is_p1:
            self.theta = theta_set(landscape)
            self.eps = default_eps(landscape) if phase.eps is None else dict(phase.eps)
        else:
            self.theta, self.eps = frozenset(), {}
        self.be = BatchEvaluator(landscape, self.T, self.theta, self.eps)
        self.K = len(self.be.treatable)

    def f(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minimisation value and feasibility for a stack of schedules."""
        res = self.be.run(X, tfi=not self.is_p1)
        value = -res.phase1 if self.is_p1 else res.phase2
        return value, res.feasible

    def f_backlog(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """As :meth:`f`, plus the old-backlog area left at the horizon."""
        res = self.be.run(X, tfi=not self.is_p1)
        value = -res.phase1 if self.is_p1 else res.phase2
        young, old = self.be.unit_status(res.final_age)
        left = (old & ~young).astype(float) @ self.be.c
        return value, res.feasible, left

    def exact_objective(self, schedule: Schedule) -> float:
        traj = simulate(self.landscape, schedule)
        if self.is_p1:
            return objective_phase1(self.landscape, schedule, traj, self.theta, self.eps, self.T)
        return objective_phase2(self.landscape, traj)

    def feasible(self, schedule: Schedule) -> bool:
        return is_feasible(self.landscape, schedule, tfi=not self.is_p1).ok

    def result(self, X, status, nodes, t0, solver) -> SearchResult:
        if X is None:
            sched = Schedule.empty(self.T)
            obj = math.nan
        else:
            sched = self.be.to_schedule(X)
            obj = self.exact_objective(sched)
        return SearchResult(sched, obj, status, nodes, time.perf_counter() - t0, solver, self.phase.name)


# --------------------------------------------------------------------------
# exhaustive


def solve_exhaustive(landscape: Landscape, phase=PHASE2, cap: int = EXHAUSTIVE_CAP,
                     chunk: int = 1 << 14) -> SearchResult:
    """Evaluate all ``2**(|treatable| * T)`` schedules and keep the best feasible one.

    Ties keep the first schedule in enumeration order.
    """
    t0 = time.perf_counter()
    prob = _Problem(landscape, phase)
    n = prob.K * prob.T
    if n > cap:
        raise SearchCapError(f"{n} binaries exceed exhaustive cap {cap}")
    total = 1 << n
    shifts = np.arange(n, dtype=np.int64)
    best_val, best_idx = math.inf, -1
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        X = ((idx[:, None] >> shifts) & 1).astype(bool).reshape(len(idx), prob.K, prob.T)
        val, ok = prob.f(X)
        if not ok.any():
            continue
        val = np.where(ok, val, np.inf)
        k = int(np.argmin(val))
        if val[k] < best_val:
            best_val, best_idx = float(val[k]), int(idx[k])
    if best_idx < 0:
        return prob.result(None, "infeasible", total, t0, "exhaustive")
    X = ((np.int64(best_idx) >> shifts) & 1).astype(bool).reshape(prob.K, prob.T)
    return prob.result(X, "optimal", total, t0, "exhaustive")


# --------------------------------------------------------------------------
# branch and bound

FutureBound = Callable[[int, np.ndarray], float]


def untreatable_pairs_bound(landscape: Landscape, horizon: int | None = None) -> FutureBound:
    """Exact future connectivity among edges whose endpoints are both untreatable.

    Those contributions do not depend on the schedule, so their suffix sums
    are a valid lower bound for the remaining periods.
    """
    T = landscape.horizon_T if horizon is None else horizon
    traj = simulate(landscape, Schedule.empty(T))
    w = np.array([landscape.edges[e] for e in traj.edges], dtype=float)
    fixed = np.array([not landscape.units[i].treatable and not landscape.units[j].treatable
                      for i, j in traj.edges], dtype=bool)
    per_t = np.zeros(T + 2)
    if len(w):
        per_t[: T + 1] = (traj.risk_conn[fixed] * w[fixed, None]).sum(axis=0)
    suffix = np.concatenate([np.cumsum(per_t[::-1])[::-1], [0.0]])

    def bound(t: int, last: np.ndarray) -> float:
        return float(suffix[t + 1]) if t + 1 <= T else 0.0

    return bound


class _BnB:
    def __init__(self, prob: _Problem, node_cap: int, propagate: bool,
                 future_bound: FutureBound | None, memo: bool, first_feasible: bool):
        self.p = prob
        be = prob.be
        self.node_cap = node_cap
        self.propagate = propagate
        self.future_bound = future_bound
        self.use_memo = memo
        self.first_feasible = first_feasible
        self.nodes = 0
        self.best = math.inf
        self.best_X: np.ndarray | None = None
        self.stopped = False
        self.memo: dict[tuple, float] = {}
        self.T = prob.T
        self.K = prob.K
        self.c = be.c
        self.limit = be.budget + BUDGET_TOL * max(1.0, abs(be.budget))
        self.has_t = be.ptreat >= 0
        self.pt = np.where(self.has_t, be.ptreat, 0)
        self.X = np.zeros((self.K, self.T), dtype=bool)
        ls = prob.landscape
        self.unit_of_k = [ls.unit_ids.index(u) for u in be.treatable]
        nbr: list[list[tuple[int, float]]] = [[] for _ in ls.unit_ids]
        for a, b, w in zip(be.ei, be.ej, be.w):
            nbr[a].append((int(b), float(w)))
            nbr[b].append((int(a), float(w)))
        self.nbr = nbr
        if prob.is_p1:
            gain = float(be.c[be.theta_mask].sum()) if be.theta_mask.any() else 0.0
            self.max_gain = min(be.budget, gain)

    def ages(self, last: np.ndarray, t: int) -> np.ndarray:
        if not self.K:
            return self.p.be.age0 + t
        lp = last[self.pt]
        treated = self.has_t & (lp > 0)
        return np.where(treated, t - lp, self.p.be.age0 + t)

    def period_cost(self, ages: np.ndarray, t: int) -> tuple[float, np.ndarray]:
        be = self.p.be
        risk_u = ((ages >= be.d) @ be.area_mat) > self.p.landscape.H * be.unit_total
        conn = risk_u[be.ei] & risk_u[be.ej]
        cost = float(conn @ be.w)
        if self.p.is_p1:
            cost = float(conn @ be.eps_edge) - float(self.c[be.theta_mask & self.X[:, t - 1]].sum())
        return cost, risk_u

    def lower_future(self, t: int, last: np.ndarray) -> float:
        lb = 0.0
        if self.p.is_p1:
            lb -= (self.T - t) * self.max_gain
        if self.future_bound is not None:
            lb += self.future_bound(t, last)
        return lb

    def run(self, incumbent: np.ndarray | None) -> None:
        if incumbent is not None:
            val, ok = self.p.f(incumbent)
            if ok[0]:
                self.best = float(val[0])
                self.best_X = incumbent.copy()
        last = np.zeros(self.K, dtype=np.int64)
        self.period(1, 0.0, last)

    def period(self, t: int, acc: float, last: np.ndarray) -> None:
        if self.stopped:
            return
        if t > self.T:
            if acc < self.best - IMPROVE_TOL or self.best_X is None:
                self.best = acc
                self.best_X = self.X.copy()
                if self.first_feasible:
                    self.stopped = True
            return
        be = self.p.be
        prev = self.ages(last, t - 1)
        if self.p.is_p1:
            young = old = np.zeros(self.K, dtype=bool)
        else:
            young, old = be.unit_status(prev)
        forced = old & ~young
        fixed_on: list[int] = []
        used = 0.0
        if self.propagate:
            fixed_on = list(np.flatnonzero(forced))
            used = float(self.c[forced].sum())
            if used > self.limit:
                return
            free = [k for k in range(self.K) if not young[k] and not forced[k]]
        else:
            free = list(range(self.K))
        # value ordering: units whose treatment breaks risky links now go first
        cur = self.ages(last, t)
        risk_u = ((cur >= be.d) @ be.area_mat) > self.p.landscape.H * be.unit_total
        score = {}
        for k in free:
            u = self.unit_of_k[k]
            s = sum(w for v, w in self.nbr[u] if risk_u[v]) if risk_u[u] else 0.0
            if self.p.is_p1 and be.theta_mask[k]:
                s += self.c[k] * 1e6
            score[k] = s / self.c[k]
        free.sort(key=lambda k: (-score[k], k))
        for k in fixed_on:
            self.X[k, t - 1] = True
        self.decide(t, acc, last, free, 0, used, score, young, forced)
        for k in fixed_on:
            self.X[k, t - 1] = False

    def decide(self, t, acc, last, free, pos, used, score, young, forced) -> None:
        if self.stopped:
            return
        if pos == len(free):
            self.close_period(t, acc, last, young, forced)
            return
        k = free[pos]
        options = []
        can_treat = used + self.c[k] <= self.limit
        if can_treat:
            options = [True, False] if score[k] > 0 or forced[k] else [False, True]
        else:
            options = [False]
        for val in options:
            if len(options) > 1:
                self.nodes += 1
                if self.nodes > self.node_cap:
                    self.stopped = True
                    return
            self.X[k, t - 1] = val
            self.decide(t, acc, last, free, pos + 1, used + (self.c[k] if val else 0.0), score, young, forced)
            self.X[k, t - 1] = False
            if self.stopped:
                return

    def close_period(self, t, acc, last, young, forced) -> None:
        xt = self.X[:, t - 1]
        if not self.propagate and not self.p.is_p1:
            if (xt & young).any() or (forced & ~xt).any():
                return
        new_last = np.where(xt, t, last)
        cost, _ = self.period_cost(self.ages(new_last, t), t)
        acc2 = acc + cost
        if acc2 + self.lower_future(t, new_last) >= self.best - IMPROVE_TOL and self.best_X is not None:
            return
        if self.use_memo and t < self.T:
            key = (t, new_last.tobytes())
            seen = self.memo.get(key)
            if seen is not None and seen <= acc2 + IMPROVE_TOL:
                return
            if len(self.memo) < 2_000_000:
                self.memo[key] = acc2
        self.period(t + 1, acc2, new_last)


def solve_bnb(
    landscape: Landscape,
    phase=PHASE2,
    node_cap: int = DEFAULT_NODE_CAP,
    *,
    propagate: bool = True,
    incumbent: Schedule | str | None = "greedy",
    future_bound: FutureBound | None = None,
    memo: bool = True,
    first_feasible: bool = False,
) -> SearchResult:
    """Depth-first branch-and-bound in period-major order.

    The bound is the exact cost of fully decided periods plus the optional
    ``future_bound`` (backlog runs also subtract the largest area gain still
    reachable).  Period-boundary states already reached at lower cost are
    pruned.  ``incumbent="greedy"`` seeds the search with
    :func:`solve_greedy_ls`.  When the node cap is hit the best schedule
    found is returned with status ``feasible``.
    """
    t0 = time.perf_counter()
    prob = _Problem(landscape, phase)
    seed_X = None
    if isinstance(incumbent, Schedule):
        seed_X = prob.be.to_array(incumbent)
    elif incumbent == "greedy":
        g = solve_greedy_ls(landscape, phase, restarts=0, local_search=not first_feasible)
        if g.ok:
            seed_X = prob.be.to_array(g.schedule)
    if first_feasible and seed_X is not None:
        return prob.result(seed_X, "feasible", 0, t0, "bnb")
    bnb = _BnB(prob, node_cap, propagate, future_bound, memo, first_feasible)
    bnb.run(seed_X)
    if bnb.best_X is None:
        status = "budget_exhausted_nodes" if bnb.stopped else "infeasible"
        return prob.result(None, status, bnb.nodes, t0, "bnb")
    if first_feasible:
        status = "feasible"
    else:
        status = "feasible" if bnb.stopped else "optimal"
    return prob.result(bnb.best_X, status, bnb.nodes, t0, "bnb")


# --------------------------------------------------------------------------
# greedy + local search


def _greedy(prob: _Problem) -> tuple[np.ndarray, bool]:
    be = prob.be
    K, T = prob.K, prob.T
    X = np.zeros((K, T), dtype=bool)
    limit = be.budget + BUDGET_TOL * max(1.0, abs(be.budget))
    ok = True
    t = 1
    pulls = 0
    while t <= T:
        prev = be.ages_at(X, t - 1)
        if prob.is_p1:
            young = np.zeros(K, dtype=bool)
            must = np.zeros(K, dtype=bool)
        else:
            young, old = be.unit_status(prev)
            must = old & ~young
        X[:, t - 1] = must
        if float(be.c[must].sum()) > limit:
            if pulls < K and _pull_forward(prob, X, t, must, limit):
                pulls += 1
                continue
            ok = False
        used = float(be.c[X[:, t - 1]].sum())
        if prob.is_p1:
            near = (prev >= be.hi - 1).astype(np.int64) @ be.member_t > 0
            yng = (prev < be.lo).astype(np.int64) @ be.member_t > 0
            backlog = near & ~yng
        else:
            backlog = np.zeros(K, dtype=bool)
        while True:
            cand = [k for k in range(K) if not X[k, t - 1] and not young[k] and used + be.c[k] <= limit]
            if not cand:
                break
            base, _ = prob.f(X)
            trial = np.repeat(X[None], len(cand), axis=0)
            trial[np.arange(len(cand)), cand, t - 1] = True
            vals, _ = prob.f(trial)
            gains = base[0] - vals
            best = None
            for n, k in enumerate(cand):
                if gains[n] <= IMPROVE_TOL:
                    continue
                key = (bool(backlog[k]), gains[n] / be.c[k])
                if best is None or key > best[0]:
                    best = (key, k)
            if best is None:
                break
            k = best[1]
            X[k, t - 1] = True
            used += be.c[k]
        t += 1
    val, feas = prob.f(X)
    return X, bool(feas[0]) and ok


def _pull_forward(prob: _Problem, X: np.ndarray, t: int, must: np.ndarray, limit: float) -> bool:
    """Move enough must-treat units of period ``t`` into earlier periods to fit the budget."""
    be = prob.be
    order = sorted(np.flatnonzero(must), key=lambda k: -be.c[k])
    over = float(be.c[must].sum()) - limit
    moved = False
    for k in order:
        if over <= 0:
            break
        for s in range(t - 1, 0, -1):
            young, _ = be.unit_status(be.ages_at(X, s - 1))
            if young[k] or X[k, s - 1]:
                continue
            if float(be.c[X[:, s - 1]].sum()) + be.c[k] <= limit:
                X[k, s - 1] = True
                over -= be.c[k]
                moved = True
                break
    return moved and over <= 0


def _neighbours(X: np.ndarray, rng: np.random.Generator | None) -> list[tuple]:
    K, T = X.shape
    moves: list[tuple] = [("flip", k, t) for t in range(T) for k in range(K)]
    for t in range(T):
        on = np.flatnonzero(X[:, t])
        off = np.flatnonzero(~X[:, t])
        moves += [("swap", int(a), int(b), t) for a in on for b in off]
    for k in range(K):
        for t in np.flatnonzero(X[k]):
            moves += [("shift", k, int(t), s) for s in range(T) if not X[k, s]]
    if rng is not None:
        perm = rng.permutation(len(moves))
        moves = [moves[i] for i in perm]
    return moves


def _apply(X: np.ndarray, move: tuple) -> None:
    if move[0] == "flip":
        _, k, t = move
        X[k, t] = not X[k, t]
    elif move[0] == "swap":
        _, a, b, t = move
        X[a, t], X[b, t] = False, True
    else:
        _, k, t, s = move
        X[k, t], X[k, s] = False, True


def _accept(prob: _Problem, cur: tuple, vals, oks, left) -> np.ndarray:
    """Mask of candidate moves that improve on ``cur = (value, ok, left)``.

    Backlog runs accept only moves that leave no more old backlog behind,
    since the treated-area objective alone is indifferent to re-treatment.
    """
    value, ok, cur_left = cur
    if not ok:
        return oks.copy()
    better = oks & (vals < value - IMPROVE_TOL)
    if prob.is_p1:
        no_worse = left <= cur_left + IMPROVE_TOL
        better = no_worse & oks & ((vals < value - IMPROVE_TOL) | (vals <= value + IMPROVE_TOL) & (left < cur_left - IMPROVE_TOL))
    return better


def _local_search(prob: _Problem, X: np.ndarray, rng, max_evals: int, batch: int = 256) -> tuple[np.ndarray, int]:
    val, ok, left = prob.f_backlog(X)
    cur = (float(val[0]), bool(ok[0]), float(left[0]))
    evals = 0
    improved = True
    while improved and evals < max_evals:
        improved = False
        moves = _neighbours(X, rng)
        for start in range(0, len(moves), batch):
            chunk = moves[start : start + batch]
            trial = np.repeat(X[None], len(chunk), axis=0)
            for n, mv in enumerate(chunk):
                _apply(trial[n], mv)
            vals, oks, lefts = prob.f_backlog(trial)
            evals += len(chunk)
            hits = np.flatnonzero(_accept(prob, cur, vals, oks, lefts))
            if len(hits):
                n = int(hits[0])
                X = trial[n].copy()
                cur = (float(vals[n]), bool(oks[n]), float(lefts[n]))
                improved = True
                break
            if evals >= max_evals:
                break
    return X, evals


def solve_greedy_ls(
    landscape: Landscape,
    phase=PHASE2,
    restarts: int = 0,
    seed: int = 0,
    *,
    local_search: bool = True,
    max_evals: int = 200_000,
) -> SearchResult:
    """Greedy construction, then toggle/swap/shift first-improvement local search.

    Each period treats the must-treat units first, then repeatedly adds the
    eligible unit with the largest objective improvement per hectare.
    Restarts perturb the incumbent with random toggles; results are
    deterministic for a given ``seed``.
    """
    t0 = time.perf_counter()
    prob = _Problem(landscape, phase)
    rng = np.random.default_rng(seed)
    X, ok = _greedy(prob)
    evals = 0
    if local_search and prob.K:
        X, n = _local_search(prob, X, None, max_evals)
        evals += n
    val, feas, left = prob.f_backlog(X)
    best_X, best = X, (float(val[0]), bool(feas[0]), float(left[0]))
    for _ in range(restarts):
        if not prob.K:
            break
        Y = best_X.copy()
        flips = max(1, (prob.K * prob.T) // 10)
        for _ in range(flips):
            Y[rng.integers(prob.K), rng.integers(prob.T)] ^= True
        Y, n = _local_search(prob, Y, rng, max_evals)
        evals += n
        v, f, lf = prob.f_backlog(Y)
        if _accept(prob, best, v, f, lf)[0]:
            best_X, best = Y, (float(v[0]), True, float(lf[0]))
    best_ok = best[1]
    status = "feasible" if best_ok else "infeasible"
    res = prob.result(best_X, status, evals, t0, "greedy")
    if not best_ok:
        res.extra["note"] = "no feasible schedule found; a backlog phase may be needed"
    return res


SOLVERS = ("exhaustive", "bnb", "greedy")


def solve(landscape: Landscape, solver: str = "bnb", phase=PHASE2, *, seed: int = 0,
          node_cap: int = DEFAULT_NODE_CAP, restarts: int = 2) -> SearchResult:
    if solver == "exhaustive":
        return solve_exhaustive(landscape, phase)
    if solver == "bnb":
        return solve_bnb(landscape, phase, node_cap)
    if solver == "greedy":
        return solve_greedy_ls(landscape, phase, restarts=restarts, seed=seed)
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


def find_feasible(landscape: Landscape, solver: str = "bnb", *, seed: int = 0,
                  node_cap: int = DEFAULT_NODE_CAP) -> SearchResult:
    """Any phase-2 feasible schedule, as certified by the chosen solver."""
    if solver == "bnb":
        return solve_bnb(landscape, PHASE2, node_cap, first_feasible=True)
    if solver == "greedy":
        return solve_greedy_ls(landscape, PHASE2, seed=seed, local_search=False)
    return solve(landscape, solver, PHASE2, seed=seed, node_cap=node_cap)


def solve_model_exact(model, landscape: Landscape, horizon: int | None = None, cap: int = 20):
    """Optimal value of a built model by enumerating its treatment binaries.

    Each ``x`` assignment is lifted to tight auxiliary values and judged by
    :func:`fuelplan.mip.check_assignment`; the model's own objective is
    evaluated on every passing assignment.  Returns ``(value, schedule)`` or
    ``(None, None)`` when no assignment passes.
    """
    from .mip import check_assignment, lift_assignment
    from .mip.build import x_name

    T = landscape.horizon_T if horizon is None else horizon
    pairs = [(u, t) for u in landscape.treatable_ids for t in range(1, T + 1) if x_name(u, t) in model.index]
    if len(pairs) > cap:
        raise SearchCapError(f"{len(pairs)} binaries exceed cap {cap}")
    best_val, best_sched = None, None
    better = (lambda a, b: a < b - IMPROVE_TOL) if model.sense == "min" else (lambda a, b: a > b + IMPROVE_TOL)
    for code in range(1 << len(pairs)):
        sched = Schedule.from_pairs((p for n, p in enumerate(pairs) if code >> n & 1), T)
        full = lift_assignment(landscape, sched)
        values = {v.name: full[v.name] for v in model.variables}
        if not check_assignment(model, values).ok:
            continue
        val = model.objective_value(values)
        if best_val is None or better(val, best_val):
            best_val, best_sched = val, sched
    return best_val, best_sched
