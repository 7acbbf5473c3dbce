import csv
import json
import math

import numpy as np
import pytest

from fuelplan import load_demo
from fuelplan.dynamics import Schedule, is_feasible, old_backlog_fraction, read_schedule_csv, simulate
from fuelplan.landscape import LandscapeError, VegClass, build_landscape
from fuelplan.pipeline import (
    InfeasibleError,
    OldFractionBelow,
    Phase1LimitError,
    Phase2Feasible,
    case_study_veg,
    compare_levels,
    generate_synthetic,
    make_report,
    parse_stop_rule,
    run_phase1,
    run_phase2,
    run_plan,
    write_comparison,
    write_report,
)
from fuelplan.search import solve_exhaustive

from helpers import desk_instance

VEG = [VegClass("a", "a", 2, 6, 3)]


def two_old(T=2):
    rows = [{"id": u, "patches": [{"id": f"{u}.p", "veg": "a", "area": 5, "age": 6}]} for u in ("u", "v")]
    return build_landscape(VEG, rows, [("u", "v", 1)], T=T, rho=0.5)


# --- stop rules -----------------------------------------------------------

def test_parse_stop_rule():
    assert parse_stop_rule("phase2_feasible") == Phase2Feasible()
    assert parse_stop_rule("old_fraction_below(0.05)") == OldFractionBelow(0.05)
    assert parse_stop_rule(" old_fraction_below( 1e-2 ) ", by="count") == OldFractionBelow(0.01, "count")
    with pytest.raises(ValueError):
        parse_stop_rule("until_done")


# --- phase 1 --------------------------------------------------------------

def test_phase1_skipped_without_old_patches():
    rows = [{"id": "u", "patches": [{"id": "p", "veg": "a", "area": 5, "age": 3}]}]
    ls = build_landscape(VEG, rows, T=3, rho=1.0)
    N, sched, aged = run_phase1(ls)
    assert N == 0 and len(sched) == 0 and aged is ls


def test_phase1_tiny_needs_one_year():
    ls = two_old()
    assert solve_exhaustive(ls).status == "infeasible"
    for solver in ("exhaustive", "bnb", "greedy"):
        N, sched, aged = run_phase1(ls, solver)
        assert N == 1 and len(sched) == 1
        assert solve_exhaustive(aged).status == "optimal"


def test_phase1_handoff_ages():
    ls = two_old()
    out = run_phase1(ls)
    final = simulate(ls, out.schedule).final_ages()
    assert {p: out.landscape.patches[p].initial_age for p in ls.patch_ids} == final
    assert out.history[0][0] == 0 and out.history[-1][0] == out.N


def test_phase1_limit():
    # the only treatable backlog unit never fits the budget
    rows = [{"id": "u", "patches": [{"id": "p", "veg": "a", "area": 5, "age": 6}]},
            {"id": "w", "patches": [{"id": "q", "veg": "a", "area": 50, "age": 1}]}]
    ls = build_landscape(VEG, rows, T=1, rho=0.05)
    with pytest.raises(Phase1LimitError):
        run_phase1(ls, N_max=2)
    with pytest.raises(ValueError):
        run_phase1(ls, N_max=0)


def test_phase1_old_fraction_rule_on_synthetic():
    ls = generate_synthetic(40, seed=3)
    assert old_backlog_fraction(ls) > 0.25
    out = run_phase1(ls, "greedy", stop_rule="old_fraction_below(0.05)")
    assert 1 <= out.N <= 15
    assert old_backlog_fraction(out.landscape) < 0.05
    assert is_feasible(ls, out.schedule, tfi=False).ok


# --- phase 2 --------------------------------------------------------------

def test_phase2_all_young():
    rows = [{"id": u, "patches": [{"id": f"{u}.p", "veg": "a", "area": 5, "age": 0}]} for u in ("u", "v")]
    ls = build_landscape(VEG, rows, [("u", "v", 1)], T=1, rho=1.0)
    sched, rep = run_phase2(ls)
    assert len(sched) == 0 and rep.objective == 0


def test_phase2_infeasible_hint():
    with pytest.raises(InfeasibleError, match="phase1"):
        run_phase2(two_old())


def test_report_series_sum_to_objective():
    rng = np.random.default_rng(4)
    done = 0
    while done < 20:
        ls = desk_instance(rng, max_bits=12, max_age=6)
        ex = solve_exhaustive(ls)
        if not ex.ok:
            continue
        sched, rep = run_phase2(ls, "bnb")
        assert rep.objective == pytest.approx(ex.objective)
        assert math.fsum(rep.weighted_series.values()) == pytest.approx(rep.objective)
        assert set(rep.connectivity_series) == set(range(1, ls.horizon_T + 1))
        assert all(a <= ls.budget * (1 + 1e-9) for a in rep.treated_area_series.values())
        again = make_report(ls, sched)
        assert again.connectivity_series == rep.connectivity_series
        assert again.risk_maps == rep.risk_maps
        done += 1


def test_demo_report():
    ls = load_demo()
    _, rep = run_phase2(ls, "bnb", node_cap=300_000)
    assert rep.initial_connectivity == 25
    assert rep.risk_maps[0]["1"]["risk"] and not rep.risk_maps[0]["3"]["risk"]
    assert all(a <= ls.budget + 1e-9 for a in rep.treated_area_series.values())
    assert rep.summary()["T"] == 5


def test_run_plan_records_phase1():
    rep = run_plan(two_old(), "exhaustive")
    assert rep.phase1_horizon_N == 1 and len(rep.phase1_schedule) == 1


# --- level comparison -----------------------------------------------------

def test_compare_single_level():
    reports, table = compare_levels(two_old().with_params(rho=1.0), [1.0], "exhaustive")
    assert len(reports) == 1 and table[0]["level"] == 1.0


def test_compare_levels_nesting():
    rng = np.random.default_rng(5)
    done = 0
    while done < 10:
        ls = desk_instance(rng, max_bits=12, max_age=6)
        try:
            reports, table = compare_levels(ls, [0.3, 0.7], "exhaustive")
        except InfeasibleError:
            continue
        assert table[1]["objective"] <= table[0]["objective"] + 1e-9
        done += 1


def test_compare_duplicate_levels_and_workers():
    ls = load_demo().with_params(horizon_T=2)
    serial, t1 = compare_levels(ls, [0.15, 0.15, 0.2], "greedy")
    assert serial[0].connectivity_series == serial[1].connectivity_series
    assert serial[0].phase2_schedule == serial[1].phase2_schedule
    pooled, t2 = compare_levels(ls, [0.15, 0.15, 0.2], "greedy", workers=2)
    assert [r.phase2_schedule for r in pooled] == [r.phase2_schedule for r in serial]
    assert [row["objective"] for row in t1] == [row["objective"] for row in t2]
    with pytest.raises(ValueError):
        compare_levels(ls, [])


# --- generator ------------------------------------------------------------

def test_case_study_table():
    veg = case_study_veg()
    assert len(veg) == 40
    for v in veg:
        v.validate()


def test_generator_single_unit():
    ls = generate_synthetic(1, old_fraction_target=0.0)
    assert len(ls.units) == 1 and ls.edges == {}


def test_generator_hits_target():
    for seed in range(5):
        ls = generate_synthetic(50, seed=seed, old_fraction_target=0.31)
        assert abs(old_backlog_fraction(ls) - 0.31) <= 0.05
        assert 0.2 <= 1 - len(ls.treatable_ids) / len(ls.units) <= 0.6
        ls.validate()


def test_generator_is_connected():
    ls = generate_synthetic(30, seed=2)
    seen, stack = {ls.unit_ids[0]}, [ls.unit_ids[0]]
    while stack:
        for n in ls.neighbours(stack.pop()):
            if n not in seen:
                seen.add(n)
                stack.append(n)
    assert seen == set(ls.unit_ids)


def test_generator_deterministic():
    a = generate_synthetic(20, seed=9)
    b = generate_synthetic(20, seed=9)
    c = generate_synthetic(20, seed=10)
    assert a == b and a != c


def test_generator_unreachable_target():
    with pytest.raises(LandscapeError):
        generate_synthetic(1, old_fraction_target=0.5, p_untreatable=0.0)
    with pytest.raises(ValueError):
        generate_synthetic(0)


# --- report files ---------------------------------------------------------

def test_write_report(tmp_path):
    ls = load_demo().with_params(horizon_T=2)
    sched, rep = run_phase2(ls, "greedy")
    files = write_report(rep, ls, tmp_path)
    names = {p.name for p in files}
    assert {"schedule.csv", "series.csv", "summary.txt", "status_t0.geojson", "status_t2.geojson",
            "connectivity.png", "objective.png", "maps.png"} <= names
    assert read_schedule_csv(tmp_path / "schedule.csv", 2) == sched
    rows = list(csv.DictReader(open(tmp_path / "series.csv")))
    assert [int(r["t"]) for r in rows] == [0, 1, 2]
    assert int(rows[0]["connectivity"]) == rep.initial_connectivity
    gj = json.loads((tmp_path / "status_t1.geojson").read_text())
    assert len(gj["features"]) == 29
    props = {f["properties"]["unit_id"]: f["properties"] for f in gj["features"]}
    assert props["1"]["risk"] == rep.risk_maps[1]["1"]["risk"]
    assert set(props["1"]) == {"unit_id", "t", "risk", "treated"}
    ring = gj["features"][0]["geometry"]["coordinates"][0]
    assert ring[0] == ring[-1]
    paths = write_comparison([{"level": 0.1, "objective": 1.0, "mean_connectivity": 1.0,
                               "treated_area": 2.0, "status": "optimal"}], tmp_path / "cmp")
    assert {p.name for p in paths} == {"levels.csv", "levels.png"}


def test_write_report_without_geometry(tmp_path):
    ls = two_old().with_params(rho=1.0)
    _, rep = run_phase2(ls, "exhaustive")
    names = {p.name for p in write_report(rep, ls, tmp_path, figures=False)}
    assert names == {"schedule.csv", "series.csv", "summary.txt"}
    assert Schedule.empty(2) != rep.phase2_schedule
