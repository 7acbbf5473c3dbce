"""Solver-independent linear model container and assignment checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy import sparse

CHECK_TOL = 1e-6

SENSES = ("<=", ">=", "=")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "continuous"  # "binary" | "continuous"
    lb: float = 0.0
    ub: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str
    rhs: float

    def activity(self, values: Mapping[str, float]) -> float:
        return math.fsum(c * values[v] for v, c in self.terms)


@dataclass(frozen=True)
class MipModel:
    name: str
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    sense: str  # "min" | "max"
    objective: tuple[tuple[str, float], ...]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        names = set()
        for v in self.variables:
            if v.name in names:
                raise ModelError(f"duplicate variable {v.name}")
            names.add(v.name)
            if v.kind not in ("binary", "continuous"):
                raise ModelError(f"variable {v.name}: unknown kind {v.kind}")
            if v.kind == "binary" and (v.lb, v.ub) != (0.0, 1.0):
                raise ModelError(f"binary {v.name} must have bounds [0, 1]")
            if v.lb > v.ub:
                raise ModelError(f"variable {v.name}: lb > ub")
        rows = set()
        for c in self.constraints:
            if c.name in rows:
                raise ModelError(f"duplicate constraint {c.name}")
            rows.add(c.name)
            if c.sense not in SENSES:
                raise ModelError(f"constraint {c.name}: bad sense {c.sense}")
            for v, _ in c.terms:
                if v not in names:
                    raise ModelError(f"constraint {c.name} references undeclared variable {v}")
        if self.sense not in ("min", "max"):
            raise ModelError(f"bad objective sense {self.sense}")
        for v, _ in self.objective:
            if v not in names:
                raise ModelError(f"objective references undeclared variable {v}")

    @cached_property
    def index(self) -> dict[str, int]:
        return {v.name: k for k, v in enumerate(self.variables)}

    @cached_property
    def var(self) -> dict[str, Variable]:
        return {v.name: v for v in self.variables}

    @cached_property
    def row(self) -> dict[str, Constraint]:
        return {c.name: c for c in self.constraints}

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for r, c in enumerate(self.constraints):
            for v, a in c.terms:
                rows.append(r)
                cols.append(self.index[v])
                vals.append(a)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), len(self.variables)))

    @cached_property
    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([c.rhs if c.sense in (">=", "=") else -np.inf for c in self.constraints])
        hi = np.array([c.rhs if c.sense in ("<=", "=") else np.inf for c in self.constraints])
        return lo, hi

    @cached_property
    def cost(self) -> np.ndarray:
        c = np.zeros(len(self.variables))
        for v, a in self.objective:
            c[self.index[v]] += a
        return c

    def objective_value(self, assignment: Mapping[str, float]) -> float:
        return math.fsum(a * assignment[v] for v, a in self.objective)

    def vector(self, assignment: Mapping[str, float]) -> np.ndarray:
        unknown = [k for k in assignment if k not in self.index]
        if unknown:
            raise ModelError(f"unknown variable {unknown[0]}")
        missing = [v.name for v in self.variables if v.name not in assignment]
        if missing:
            raise ModelError(f"assignment misses {len(missing)} variables, e.g. {missing[0]}")
        return np.array([float(assignment[v.name]) for v in self.variables])

    def summary(self) -> dict[str, int]:
        return {
            "variables": len(self.variables),
            "binaries": sum(v.kind == "binary" for v in self.variables),
            "constraints": len(self.constraints),
        }


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    violated: tuple[str, ...] = field(default=())

    def __bool__(self) -> bool:
        return self.ok


def check_assignment(model: MipModel, assignment: Mapping[str, float], tol: float = CHECK_TOL) -> CheckResult:
    """Verify every row, bound and integrality requirement within ``tol``.

    Violations are reported by row name; bound and integrality failures are
    prefixed ``bound:`` and ``integrality:``.
    """
    x = model.vector(assignment)
    bad: list[str] = []
    for v, val in zip(model.variables, x):
        if val < v.lb - tol or val > v.ub + tol:
            bad.append(f"bound:{v.name}")
        if v.kind == "binary" and min(abs(val), abs(val - 1.0)) > tol:
            bad.append(f"integrality:{v.name}")
    if model.constraints:
        act = model.matrix @ x
        lo, hi = model.row_bounds
        viol = (act < lo - tol) | (act > hi + tol)
        bad.extend(model.constraints[k].name for k in np.flatnonzero(viol))
    return CheckResult(not bad, tuple(bad))
