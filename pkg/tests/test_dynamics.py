import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuelplan.dynamics import (
    BatchEvaluator,
    Schedule,
    ScheduleError,
    connectivity_series,
    default_eps,
    is_feasible,
    objective_phase1,
    objective_phase2,
    old_backlog_fraction,
    read_schedule_csv,
    simulate,
    theta_set,
    write_schedule_csv,
    write_trajectory_csv,
)
from fuelplan.landscape import VegClass, build_landscape, load_demo

from helpers import all_schedules, random_feasible_schedule, random_landscape, random_schedule

EVC = [VegClass("1", "EVC 1", 3, 10, 5), VegClass("3", "EVC 3", 4, 15, 7), VegClass("6", "EVC 6", 7, 20, 10)]


def units(*specs, edges=(), **kw):
    """``specs`` are (id, [(veg, area, age), ...], treatable)."""
    rows = [
        {"id": u, "treatable": tr, "patches": [{"veg": v, "area": a, "age": g} for v, a, g in ps]}
        for u, ps, tr in specs
    ]
    return build_landscape(EVC, rows, list(edges), **kw)


# ---------------------------------------------------------------- simulate


def test_reset_on_treatment():
    ls = units(("a", [("1", 2, 6), ("3", 3, 9)], True), T=2)
    traj = simulate(ls, Schedule.from_pairs([("a", 1)], 2))
    assert [traj.age_of(p, 1) for p in ls.units["a"].patches] == [0, 0]
    assert [traj.age_of(p, 2) for p in ls.units["a"].patches] == [1, 1]


def test_evc1_at_threshold_is_risky():
    ls = units(("a", [("1", 1, 5)], True), T=1)
    assert simulate(ls, Schedule.empty(1)).is_risky_patch(ls.units["a"].patches[0], 0)
    ls = units(("a", [("1", 1, 4)], True), T=1)
    traj = simulate(ls, Schedule.empty(1))
    p = ls.units["a"].patches[0]
    assert not traj.is_risky_patch(p, 0) and traj.is_risky_patch(p, 1)


def test_demo_unit1_risky_unit3_not():
    ls = load_demo()
    traj = simulate(ls, Schedule.empty(5))
    assert all(traj.is_risky_patch(p, 0) for p in ls.units["1"].patches)
    assert traj.is_risky_unit("1", 0)
    assert not traj.is_risky_unit("3", 0)
    assert [traj.age_of(p, 0) for p in ls.units["3"].patches] == [1, 1, 1]


def test_unit_risk_is_strict_majority():
    # exactly half the area risky is not enough at H = 0.5
    ls = units(("a", [("1", 5, 9), ("1", 5, 0)], True), T=1, H=0.5)
    assert not simulate(ls, Schedule.empty(1)).is_risky_unit("a", 0)
    ls = units(("a", [("1", 5.01, 9), ("1", 5, 0)], True), T=1, H=0.5)
    assert simulate(ls, Schedule.empty(1)).is_risky_unit("a", 0)


def test_schedule_validation():
    ls = units(("a", [("1", 1, 1)], True), ("b", [("1", 1, 1)], False), T=2)
    for bad in (Schedule.from_pairs([("b", 1)], 2), Schedule.from_pairs([("a", 3)], 2),
                Schedule.from_pairs([("z", 1)], 2)):
        with pytest.raises(ScheduleError):
            simulate(ls, bad)


# ---------------------------------------------------------------- feasibility


def test_empty_schedule_feasible_when_nothing_old():
    ls = units(("a", [("1", 1, 1)], True), ("b", [("6", 1, 3)], True), edges=[("a", "b")], T=3)
    assert is_feasible(ls, Schedule.empty(3)).ok


def test_young_patch_blocks_treatment():
    ls = units(("a", [("3", 4, 2), ("1", 4, 8)], True), T=1, rho=1.0)
    res = is_feasible(ls, Schedule.from_pairs([("a", 1)], 1))
    assert not res.ok
    assert [(v.tag, v.unit, v.t) for v in res.violations] == [("young", "a", 1)]


def test_old_patch_forces_treatment():
    ls = units(("a", [("6", 4, 20)], True), T=1, rho=1.0)
    res = is_feasible(ls, Schedule.empty(1))
    assert [(v.tag, v.unit, v.t) for v in res.violations] == [("must_treat", "a", 1)]
    assert is_feasible(ls, Schedule.from_pairs([("a", 1)], 1)).ok


def test_young_wins_over_old():
    ls = units(("a", [("6", 4, 25), ("1", 1, 0)], True), T=1, rho=1.0)
    assert is_feasible(ls, Schedule.empty(1)).ok


def test_budget_violation():
    ls = units(("a", [("1", 6, 4)], True), ("b", [("1", 5, 4)], True), T=1, rho=0.5)
    res = is_feasible(ls, Schedule.from_pairs([("a", 1)], 1))
    assert [(v.tag, v.t) for v in res.violations] == [("budget", 1)]
    assert is_feasible(ls, Schedule.from_pairs([("b", 1)], 1)).ok
    assert is_feasible(ls, Schedule.from_pairs([("a", 1)], 1), tfi=False).ok is False


def test_budget_tolerance_at_boundary():
    # 0.1 * 30 is not exactly 3.0 in binary floating point
    ls = units(("a", [("1", 3, 4)], True), ("b", [("1", 27, 4)], True), T=1, rho=0.1)
    assert is_feasible(ls, Schedule.from_pairs([("a", 1)], 1)).ok


# ---------------------------------------------------------------- objectives


def test_objective_no_risk_is_zero():
    ls = units(("a", [("6", 1, 0)], True), ("b", [("6", 1, 0)], True), edges=[("a", "b")], T=3)
    assert objective_phase2(ls, simulate(ls, Schedule.empty(3))) == 0


def test_objective_always_connected():
    ls = units(("a", [("1", 1, 5)], False), ("b", [("1", 1, 5)], False), edges=[("a", "b")], T=3)
    assert objective_phase2(ls, simulate(ls, Schedule.empty(3))) == 3


def test_objective_weighted():
    ls = units(("a", [("1", 1, 5)], False), ("b", [("1", 1, 5)], True), ("c", [("1", 1, 5)], False),
               edges=[("a", "b", 2.5), ("b", "c", 0.5)], T=2, rho=1.0)
    traj = simulate(ls, Schedule.from_pairs([("b", 2)], 2))
    assert objective_phase2(ls, traj) == pytest.approx(3.0)
    counts, weighted = connectivity_series(ls, traj)
    assert counts == [2, 2, 0]
    assert weighted == [3.0, 3.0, 0.0]


def test_phase1_single_unit_area():
    ls = units(("a", [("1", 10, 9)], True), T=1, rho=1.0)
    sched = Schedule.from_pairs([("a", 1)], 1)
    assert theta_set(ls) == {"a"}
    assert objective_phase1(ls, sched, simulate(ls, sched), theta_set(ls), default_eps(ls), 1) == 10


def test_phase1_penalty_terms():
    ls = units(("1", [("1", 10, 9)], True), ("2", [("1", 10, 9)], True), edges=[("1", "2")], T=1, rho=1.0)
    theta = theta_set(ls)
    eps = {"1": 0.001, "2": 0.001}
    empty = Schedule.empty(1)
    assert objective_phase1(ls, empty, simulate(ls, empty), theta, eps, 1) == pytest.approx(-0.001)
    one = Schedule.from_pairs([("1", 1)], 1)
    assert objective_phase1(ls, one, simulate(ls, one), theta, eps, 1) == pytest.approx(10.0)


def test_phase1_edge_counted_only_from_lower_theta_endpoint():
    # "2" is young so it is not a backlog unit; edge (1, 2) still counts via 1
    ls = units(("1", [("1", 10, 9)], True), ("2", [("1", 3, 9), ("6", 1, 1)], True),
               ("3", [("1", 2, 9)], False), edges=[("1", "2"), ("2", "3")], T=1, rho=1.0)
    theta = theta_set(ls)
    assert theta == {"1"}
    eps = {u: 0.5 for u in ls.unit_ids}
    empty = Schedule.empty(1)
    assert objective_phase1(ls, empty, simulate(ls, empty), theta, eps, 1) == pytest.approx(-0.5)


def test_phase1_empty_schedule_only_penalty():
    ls = load_demo()
    traj = simulate(ls, Schedule.empty(5))
    assert objective_phase1(ls, Schedule.empty(5), traj, set(), default_eps(ls), 5) == 0


def test_default_eps():
    ls = load_demo()
    smallest = min(u.area_c for u in ls.units.values())
    assert all(v == pytest.approx(1e-3 * smallest) for v in default_eps(ls).values())


# ---------------------------------------------------------------- theta


def test_theta_next_year_old():
    ls = units(("a", [("6", 5, 19)], True), ("b", [("6", 5, 18)], True))
    assert theta_set(ls) == {"a"}


def test_theta_excludes_young():
    ls = units(("a", [("6", 5, 25), ("1", 1, 1)], True))
    assert theta_set(ls) == frozenset()


def test_theta_all_zero_ages():
    ls = units(("a", [("6", 5, 0)], True), ("b", [("1", 5, 0)], True))
    assert theta_set(ls) == frozenset()


def test_theta_skips_untreatable():
    ls = units(("a", [("6", 5, 30)], False), ("b", [("6", 5, 30)], True))
    assert theta_set(ls) == {"b"}


def test_old_fraction_area_and_count():
    ls = units(("a", [("6", 30, 25)], True), ("b", [("6", 10, 2)], True), ("c", [("6", 10, 9)], True))
    assert old_backlog_fraction(ls) == pytest.approx(0.6)
    assert old_backlog_fraction(ls, by="count") == pytest.approx(1 / 3)
    ages = {p: 0 for p in ls.patches}
    assert old_backlog_fraction(ls, ages) == 0


# ---------------------------------------------------------------- IO


def test_schedule_csv_round_trip(tmp_path):
    s = Schedule.from_pairs([("10", 2), ("9", 1), ("2", 2)], 3)
    write_schedule_csv(s, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == ["unit_id,t", "9,1", "2,2", "10,2"]
    assert read_schedule_csv(tmp_path / "s.csv", 3) == s


def test_trajectory_csv(tmp_path):
    ls = load_demo(T=2)
    traj = simulate(ls, Schedule.from_pairs([("1", 1)], 2))
    write_trajectory_csv(traj, tmp_path / "p.csv", tmp_path / "u.csv")
    plines = (tmp_path / "p.csv").read_text().splitlines()
    assert plines[0] == "patch_id,t,age,risk_patch,young,old"
    assert len(plines) == 1 + 53 * 3
    ulines = (tmp_path / "u.csv").read_text().splitlines()
    assert "1,0,1" in ulines and "1,1,0" in ulines


# ---------------------------------------------------------------- properties


def _scalar_risk(ls, traj, u, t):
    members = ls.units[u].patches
    risky = sum(ls.patches[p].area for p in members if traj.age_of(p, t) >= ls.veg_of(p).risk_threshold)
    return risky > ls.H * sum(ls.patches[p].area for p in members)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trajectory_laws(seed):
    rng = np.random.default_rng(seed)
    ls = random_landscape(rng, int(rng.integers(1, 6)), int(rng.integers(1, 5)))
    sched = random_schedule(rng, ls)
    traj = simulate(ls, sched)
    T = sched.horizon
    for p in ls.patch_ids:
        u = ls.patches[p].unit_id
        v = ls.veg_of(p)
        assert traj.age_of(p, 0) == ls.patches[p].initial_age
        for t in range(1, T + 1):
            if sched.x(u, t):
                assert traj.age_of(p, t) == 0
            else:
                assert traj.age_of(p, t) == traj.age_of(p, t - 1) + 1
        for t in range(T + 1):
            a = traj.age_of(p, t)
            assert traj.is_risky_patch(p, t) == (a >= v.risk_threshold)
            assert traj.is_young(p, t) == (a < v.min_tfi)
            assert traj.is_old(p, t) == (a >= v.max_tfi)
    for u in ls.unit_ids:
        for t in range(T + 1):
            assert traj.is_risky_unit(u, t) == _scalar_risk(ls, traj, u, t)
        if not ls.units[u].treatable:
            seq = [traj.is_risky_unit(u, t) for t in range(T + 1)]
            assert seq == sorted(seq)
    for k, (i, j) in enumerate(traj.edges):
        for t in range(T + 1):
            assert traj.risk_conn[k, t] == (traj.is_risky_unit(i, t) and traj.is_risky_unit(j, t))
    again = simulate(ls, sched)
    assert np.array_equal(again.age, traj.age) and np.array_equal(again.risk_conn, traj.risk_conn)


def test_batch_matches_scalar_functions():
    rng = np.random.default_rng(42)
    for _ in range(60):
        ls = random_landscape(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        theta = theta_set(ls)
        eps = default_eps(ls)
        be = BatchEvaluator(ls, theta=theta, eps=eps)
        scheds = list(itertools.islice(all_schedules(ls), 64))
        res = be.run(np.stack([be.to_array(s) for s in scheds]))
        for b, s in enumerate(scheds):
            traj = simulate(ls, s)
            assert res.phase2[b] == pytest.approx(objective_phase2(ls, traj), abs=1e-12)
            assert res.phase1[b] == pytest.approx(
                objective_phase1(ls, s, traj, theta, eps, s.horizon), abs=1e-9)
            assert bool(res.feasible[b]) == is_feasible(ls, s, traj).ok
            assert list(res.final_age[b]) == [traj.final_ages()[p] for p in be.patch_ids]
            assert be.to_schedule(be.to_array(s)) == s


def test_batch_ages_at_and_status():
    rng = np.random.default_rng(5)
    for _ in range(30):
        ls = random_landscape(rng, 4, 3)
        s = random_schedule(rng, ls)
        be = BatchEvaluator(ls)
        X = be.to_array(s)
        traj = simulate(ls, s)
        for t in range(s.horizon + 1):
            age = be.ages_at(X, t)
            assert list(age) == [traj.age_of(p, t) for p in be.patch_ids]
            young, old = be.unit_status(age)
            for k, u in enumerate(be.treatable):
                ps = ls.units[u].patches
                assert young[k] == any(traj.is_young(p, t) for p in ps)
                assert old[k] == any(traj.is_old(p, t) for p in ps)


def test_random_feasible_schedules_are_feasible():
    rng = np.random.default_rng(9)
    made = 0
    for _ in range(40):
        ls = random_landscape(rng, 4, 3)
        s = random_feasible_schedule(rng, ls)
        if s is not None:
            made += 1
            assert is_feasible(ls, s).ok
    assert made > 10
