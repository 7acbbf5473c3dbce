"""Random small instances shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from fuelplan.dynamics import Schedule
from fuelplan.landscape import VegClass, build_landscape

SMALL_VEG = (
    VegClass("a", "short", 2, 5, 3),
    VegClass("b", "medium", 3, 8, 4),
    VegClass("c", "long", 1, 4, 2),
)


def random_landscape(rng: np.random.Generator, n_units: int = 4, T: int = 3, *,
                     p_untreatable: float = 0.25, p_edge: float = 0.5, rho: float | None = None,
                     H: float | None = None, real_weights: bool = False, max_age: int = 9,
                     min_treatable: int = 0):
    """A random landscape with ages spread across the TFI band edges."""
    rows = []
    for u in range(1, n_units + 1):
        patches = []
        for k in range(int(rng.integers(1, 3))):
            veg = SMALL_VEG[int(rng.integers(len(SMALL_VEG)))]
            patches.append({"id": f"{u}.{k + 1}", "veg": veg.code,
                            "area": float(rng.integers(1, 9)), "age": int(rng.integers(0, max_age + 1))})
        treat = u <= min_treatable or rng.random() >= p_untreatable
        rows.append({"id": str(u), "patches": patches, "treatable": bool(treat)})
    edges = []
    for i, j in itertools.combinations(range(1, n_units + 1), 2):
        if rng.random() < p_edge:
            w = round(float(rng.uniform(0.1, 3.0)), 3) if real_weights else int(rng.integers(1, 4))
            edges.append((str(i), str(j), w))
    return build_landscape(
        SMALL_VEG, rows, edges, T=T,
        rho=float(rng.uniform(0.2, 1.0)) if rho is None else rho,
        H=float(rng.choice([0.0, 0.3, 0.5])) if H is None else H,
    )


def desk_instance(rng: np.random.Generator, max_bits: int = 12, **kw):
    """Random landscape whose |treatable| * T fits in ``max_bits``."""
    while True:
        T = int(rng.integers(1, 5))
        n = int(rng.integers(1, 6))
        ls = random_landscape(rng, n, T, **kw)
        if len(ls.treatable_ids) * T <= max_bits:
            return ls


def all_schedules(landscape, horizon: int | None = None):
    T = landscape.horizon_T if horizon is None else horizon
    pairs = [(u, t) for u in landscape.treatable_ids for t in range(1, T + 1)]
    for code in range(1 << len(pairs)):
        yield Schedule.from_pairs((p for n, p in enumerate(pairs) if code >> n & 1), T)


def random_schedule(rng: np.random.Generator, landscape, horizon: int | None = None, p: float = 0.3) -> Schedule:
    T = landscape.horizon_T if horizon is None else horizon
    pairs = [(u, t) for u in landscape.treatable_ids for t in range(1, T + 1) if rng.random() < p]
    return Schedule.from_pairs(pairs, T)


def random_feasible_schedule(rng: np.random.Generator, landscape, p: float = 0.4, tries: int = 20):
    """A schedule built period by period to respect budget and TFI rules, or None."""
    from fuelplan.dynamics import BatchEvaluator, within_budget

    be = BatchEvaluator(landscape)
    K, T = len(be.treatable), be.T
    for _ in range(tries):
        X = np.zeros((K, T), dtype=bool)
        ok = True
        for t in range(1, T + 1):
            young, old = be.unit_status(be.ages_at(X, t - 1))
            X[:, t - 1] = old & ~young
            used = float(be.c[X[:, t - 1]].sum())
            if not within_budget(used, be.budget):
                ok = False
                break
            for k in rng.permutation(K):
                if X[k, t - 1] or young[k] or rng.random() >= p:
                    continue
                if within_budget(used + be.c[k], be.budget):
                    X[k, t - 1] = True
                    used += be.c[k]
        if ok:
            return be.to_schedule(X)
    return None
