"""Command-line entry point: ``fuelplan <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 infeasible or failed check,
3 file I/O error, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import dynamics, pipeline, search
from .landscape import WEIGHT_SCHEMES, LandscapeError, load_landscape, save_landscape
from .mip import ModelError, build_phase1, build_phase2, check_assignment, read_lp_file, read_solution, write_model

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    command: str
    instance: str | None = None
    solver: str = "bnb"
    rho: float | None = None
    H: float | None = None
    T: int | None = None
    weights: str | None = None
    seed: int = 0
    out: str = "out"

    def validate(self) -> None:
        if self.rho is not None and not 0 < self.rho <= 1:
            raise LandscapeError(f"--rho must lie in (0, 1], got {self.rho}")
        if self.H is not None and not 0 <= self.H < 1:
            raise LandscapeError(f"--H must lie in [0, 1), got {self.H}")
        if self.T is not None and self.T < 1:
            raise LandscapeError(f"--T must be at least 1, got {self.T}")

    def load(self):
        self.validate()
        return load_landscape(self.instance, T=self.T, rho=self.rho, H=self.H, weights=self.weights)


def _levels(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fuelplan", description="Fuel-treatment scheduling against high-risk connectivity.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def inst(sp, params=True):
        sp.add_argument("instance", help="instance JSON file or CSV directory")
        if params:
            sp.add_argument("--rho", type=float)
            sp.add_argument("--H", type=float)
            sp.add_argument("--T", type=int)
            sp.add_argument("--weights", choices=WEIGHT_SCHEMES)

    def solving(sp):
        sp.add_argument("--solver", choices=search.SOLVERS, default="bnb")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--node-cap", type=int, default=search.DEFAULT_NODE_CAP)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default="out")
        sp.add_argument("--no-figures", action="store_true")

    sp = sub.add_parser("validate", help="load an instance and report its contents")
    inst(sp)

    sp = sub.add_parser("simulate", help="simulate a schedule and write trajectories")
    inst(sp)
    sp.add_argument("--schedule", help="schedule CSV (unit_id,t); empty schedule when omitted")
    sp.add_argument("--out", default="out")

    sp = sub.add_parser("build", help="write the MIP model as LP or MPS")
    inst(sp)
    sp.add_argument("--format", choices=("lp", "mps"), default="lp")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-reduce", action="store_true", help="keep untreatable-unit age variables")
    sp.add_argument("--N", type=int, help="write the backlog model over N periods instead")

    sp = sub.add_parser("check", help="check a solution against an LP model")
    sp.add_argument("model")
    sp.add_argument("solution")
    sp.add_argument("--dialect", choices=("generic_csv", "lp_sol_xml"), default="generic_csv")

    sp = sub.add_parser("solve", help="search for a schedule and write it with its series")
    inst(sp)
    solving(sp)
    sp.add_argument("--N", type=int, help="solve the backlog objective over N periods")

    sp = sub.add_parser("phase1", help="clear the old-vegetation backlog")
    inst(sp)
    solving(sp)
    sp.add_argument("--N-max", type=int, default=pipeline.DEFAULT_N_MAX)
    sp.add_argument("--stop-rule", default="phase2_feasible")
    sp.add_argument("--by", choices=("area", "count"), default="area")

    sp = sub.add_parser("phase2", help="connectivity schedule with full report")
    inst(sp)
    solving(sp)

    sp = sub.add_parser("compare", help="phase-2 runs over several treatment levels")
    inst(sp)
    solving(sp)
    sp.add_argument("--levels", type=_levels, required=True, help="comma-separated fractions")

    sp = sub.add_parser("generate", help="write a synthetic instance")
    sp.add_argument("--units", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--old-fraction", type=float, default=0.31)
    sp.add_argument("--rho", type=float, default=0.07)
    sp.add_argument("--H", type=float, default=0.5)
    sp.add_argument("--T", type=int, default=5)
    sp.add_argument("--out", required=True)
    return p


def _config(args) -> RunConfig:
    return RunConfig(
        command=args.command,
        instance=getattr(args, "instance", None),
        solver=getattr(args, "solver", "bnb"),
        rho=getattr(args, "rho", None),
        H=getattr(args, "H", None),
        T=getattr(args, "T", None),
        weights=getattr(args, "weights", None),
        seed=getattr(args, "seed", 0),
        out=getattr(args, "out", "out"),
    )


def cmd_validate(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    theta = dynamics.theta_set(ls)
    print(f"instance: {ls.name or cfg.instance}")
    print(f"units: {len(ls.units)} ({len(ls.treatable_ids)} treatable)")
    print(f"patches: {len(ls.patches)}")
    print(f"veg classes: {len(ls.veg_classes)}")
    print(f"edges: {len(ls.edges)}")
    print(f"T={ls.horizon_T} rho={ls.rho:g} H={ls.H:g} R={ls.R:g} budget={ls.budget:g}")
    print(f"old backlog: {dynamics.old_backlog_fraction(ls):.4f} of treatable area; theta size {len(theta)}")
    risky = [u for u in ls.unit_ids if dynamics.simulate(ls, dynamics.Schedule.empty(0)).is_risky_unit(u, 0)]
    print(f"high-risk units at t=0: {len(risky)}")
    print("ok")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    if args.schedule:
        sched = dynamics.read_schedule_csv(args.schedule, ls.horizon_T)
    else:
        sched = dynamics.Schedule.empty(ls.horizon_T)
    traj = dynamics.simulate(ls, sched)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dynamics.write_trajectory_csv(traj, out / "patches.csv", out / "units.csv")
    report = pipeline.make_report(ls, sched)
    print(f"objective: {dynamics.objective_phase2(ls, traj)!r}")
    feas = dynamics.is_feasible(ls, sched, traj)
    for v in feas.violations:
        print(f"violation: {v.tag} unit={v.unit} t={v.t}")
    print(f"connectivity: {[report.initial_connectivity, *report.connectivity_series.values()]}")
    return EXIT_OK if feas.ok else EXIT_INFEASIBLE


def cmd_build(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    reduce = not args.no_reduce
    model = build_phase1(ls, args.N, reduce=reduce) if args.N else build_phase2(ls, reduce=reduce)
    write_model(model, args.format, args.out)
    print(model.summary())
    return EXIT_OK


def cmd_check(args, cfg: RunConfig) -> int:
    if Path(args.model).suffix.lower() == ".mps":
        raise ModelError("check reads LP models only; rebuild with --format lp")
    model = read_lp_file(args.model)
    sol = read_solution(model, args.solution, args.dialect)
    for w in sol.warnings:
        print(f"warning: {w}")
    res = check_assignment(model, sol.values)
    print(f"objective: {model.objective_value(sol.values)!r}")
    if res.ok:
        print("feasible")
        return EXIT_OK
    for name in res.violated:
        print(f"violated: {name}")
    return EXIT_INFEASIBLE


def _phase(args, ls):
    return search.Phase1(args.N) if getattr(args, "N", None) else search.PHASE2


def cmd_solve(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    res = search.solve(ls, cfg.solver, _phase(args, ls), seed=cfg.seed, node_cap=args.node_cap)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.txt").write_text(res.summary_text())
    print(res.summary_text(), end="")
    if not res.ok:
        return EXIT_INFEASIBLE
    rep = pipeline.make_report(ls, res.schedule, res)
    pipeline.write_report(rep, ls, out, figures=not args.no_figures)
    return EXIT_OK


def cmd_phase1(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    rule = pipeline.parse_stop_rule(args.stop_rule, args.by)
    try:
        p1 = pipeline.run_phase1(ls, cfg.solver, args.N_max, rule, seed=cfg.seed, node_cap=args.node_cap)
    except pipeline.Phase1LimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dynamics.write_schedule_csv(p1.schedule, out / "phase1_schedule.csv")
    save_landscape(p1.landscape, out / "aged.json")
    print(f"N: {p1.N}")
    for N, frac in p1.history:
        print(f"old fraction after {N}: {frac:.4f}")
    return EXIT_OK


def cmd_phase2(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    _, rep = pipeline.run_phase2(ls, cfg.solver, seed=cfg.seed, node_cap=args.node_cap)
    pipeline.write_report(rep, ls, cfg.out, figures=not args.no_figures)
    for k, v in rep.summary().items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig) -> int:
    ls = cfg.load()
    reports, table = pipeline.compare_levels(ls, args.levels, cfg.solver, seed=cfg.seed,
                                             node_cap=args.node_cap, workers=args.workers)
    out = Path(cfg.out)
    for k, rep in enumerate(reports):
        pipeline.write_report(rep, ls.with_params(rho=rep.rho), out / f"level_{k + 1}", figures=not args.no_figures)
    pipeline.write_comparison(table, out, figures=not args.no_figures)
    print("level,objective,mean_connectivity,status")
    for row in table:
        print(f"{row['level']:g},{row['objective']!r},{row['mean_connectivity']!r},{row['status']}")
    return EXIT_OK


def cmd_generate(args, cfg: RunConfig) -> int:
    ls = pipeline.generate_synthetic(args.units, seed=args.seed, old_fraction_target=args.old_fraction,
                                     T=args.T, rho=args.rho, H=args.H)
    save_landscape(ls, args.out)
    print(f"wrote {args.out}: {len(ls.units)} units, old fraction {dynamics.old_backlog_fraction(ls):.4f}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "build": cmd_build,
    "check": cmd_check,
    "solve": cmd_solve,
    "phase1": cmd_phase1,
    "phase2": cmd_phase2,
    "compare": cmd_compare,
    "generate": cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args, _config(args))
    except pipeline.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (LandscapeError, ModelError, dynamics.ScheduleError, search.SearchCapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
