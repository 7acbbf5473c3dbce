"""Multi-period fuel-treatment scheduling that breaks up connected high-risk vegetation."""

from .dynamics import (
    BatchEvaluator,
    Schedule,
    StateTrajectory,
    connectivity_series,
    is_feasible,
    objective_phase1,
    objective_phase2,
    old_backlog_fraction,
    simulate,
    theta_set,
)
from .landscape import Landscape, LandscapeError, Patch, TreatmentUnit, VegClass, build_landscape, load_demo, load_landscape
from .search import PHASE2, Phase1, SearchResult, solve, solve_bnb, solve_exhaustive, solve_greedy_ls

__version__ = "0.1.0"

__all__ = [
    "BatchEvaluator", "Landscape", "LandscapeError", "PHASE2", "Patch", "Phase1", "Schedule", "SearchResult",
    "StateTrajectory", "TreatmentUnit", "VegClass", "build_landscape", "connectivity_series", "is_feasible",
    "load_demo", "load_landscape", "objective_phase1", "objective_phase2", "old_backlog_fraction", "simulate",
    "solve", "solve_bnb", "solve_exhaustive", "solve_greedy_ls", "theta_set",
]
