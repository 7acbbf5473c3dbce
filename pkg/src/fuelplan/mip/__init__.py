from .build import (
    BIG_M_CAP,
    BigMPlan,
    build_phase1,
    build_phase2,
    lift_assignment,
    lift_for,
    plan_big_m,
    schedule_from_assignment,
)
from .lpio import read_lp, read_lp_file, sanitize, write_lp, write_model, write_mps
from .model import CheckResult, Constraint, MipModel, ModelError, Variable, check_assignment
from .solution import Solution, read_solution

__all__ = [
    "BIG_M_CAP", "BigMPlan", "CheckResult", "Constraint", "MipModel", "ModelError", "Solution",
    "Variable", "build_phase1", "build_phase2", "check_assignment", "lift_assignment", "lift_for",
    "plan_big_m", "read_lp", "read_lp_file", "read_solution", "sanitize", "schedule_from_assignment",
    "write_lp", "write_model", "write_mps",
]
