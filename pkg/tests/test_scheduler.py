import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimgrid.milp import Status
from aimgrid.scheduler import (V_AVG, V_MAX, IntersectionGeometry, MakespanMode, ScheduleInfeasible,
                               SchedulerParams, Vehicle, build_schedule_model, compute_t_access_min,
                               compute_t_desired, compute_t_gap1, list_schedule, solve_schedule,
                               validate_schedule, with_assignment)
from helpers import brute_force

PHASE = {"EB": "O", "WB": "O", "NB": "X", "SB": "X"}


def veh(i, mv, d, v=V_AVG, **kw):
    return Vehicle(i, 1, mv, PHASE[mv], d, v, **kw)


def integrate_arrival(d, v, a, vmax, dt=1e-4):
    """Time to cover d accelerating at a up to vmax, by explicit stepping."""
    x, t = 0.0, 0.0
    while x < d:
        nv = min(v + a * dt, vmax)
        step = 0.5 * (v + nv) * dt
        if x + step >= d:
            return t + dt * (d - x) / step
        x, v, t = x + step, nv, t + dt
    return t


def test_speed_constants():
    assert V_MAX == pytest.approx(72.4 / 3.6)
    assert V_AVG == pytest.approx(56.3 / 3.6)
    g = IntersectionGeometry.from_speeds()
    assert g.d_access == pytest.approx(V_AVG ** 2 / 4 + 2 * V_AVG)


@pytest.mark.parametrize("d,v", [(0.5, 0.0), (50.0, 0.0), (150.0, 5.0), (300.0, V_AVG), (700.0, V_MAX),
                                 (40.0, 19.0)])
def test_t_access_min_matches_integration(d, v):
    p = SchedulerParams()
    got = compute_t_access_min(veh(1, "EB", d, v), p, now=10.0)
    assert got - 10.0 == pytest.approx(integrate_arrival(d, v, p.a_max, p.v_max), abs=1e-3)


def test_t_access_min_override_and_past_access_point():
    p = SchedulerParams()
    assert compute_t_access_min(veh(1, "EB", -3.0), p, 4.0) == 4.0
    assert compute_t_access_min(veh(1, "EB", 100.0, t_access_min=99.0), p, 4.0) == 99.0


def test_t_desired():
    p = SchedulerParams()
    assert compute_t_desired(veh(1, "EB", 690.0), p, 0.0) == pytest.approx(690.0 / V_AVG)
    assert 690.0 / V_AVG == pytest.approx(44.1, abs=0.1)
    assert compute_t_desired(veh(1, "EB", 10.0, t_access_desired=3.0), p, 0.0) == 3.0


def test_t_gap1_bands():
    p = SchedulerParams()
    assert compute_t_gap1(0.0, p) == pytest.approx(2.5)   # 5 m body at 2 m/s crawl
    assert compute_t_gap1(1.9, p) == pytest.approx(2.5)
    assert compute_t_gap1(5.0, p) == pytest.approx(2.25)
    assert compute_t_gap1(9.0, p) == pytest.approx(1.25)
    assert compute_t_gap1(10.0, p) == pytest.approx(1.0)
    assert compute_t_gap1(V_AVG, p) == pytest.approx(1.0)
    assert compute_t_gap1(0.0, p, vehicle_length=1.0) == pytest.approx(1.0)


@given(st.floats(0, 30), st.floats(0, 30))
def test_t_gap1_monotone_and_bounded(v1, v2):
    p = SchedulerParams()
    lo, hi = sorted((v1, v2))
    assert compute_t_gap1(hi, p) <= compute_t_gap1(lo, p)
    assert p.headway_floor <= compute_t_gap1(v1, p) <= 2.5


def test_params_validation():
    with pytest.raises(ValueError):
        SchedulerParams(w1=0, w2=0)
    with pytest.raises(ValueError):
        SchedulerParams(t_gap2=0)
    with pytest.raises(ValueError):
        SchedulerParams(big_m=10.0)
    assert SchedulerParams().big_m == pytest.approx(207.5)
    assert SchedulerParams(makespan_mode="free_max").makespan_mode is MakespanMode.FREE_MAX


def test_same_movement_pair_separated_by_headway():
    p = SchedulerParams()
    vs = [veh(1, "EB", 200.0), veh(2, "EB", 200.0)]
    r = solve_schedule(vs, p, 0.0)
    assert abs(r.assignments[1] - r.assignments[2]) == pytest.approx(1.0, abs=1e-7)
    # the makespan term pulls the leader one headway early instead of delaying the follower
    assert max(r.assignments.values()) == pytest.approx(200.0 / V_AVG, abs=1e-7)


def test_cross_phase_pair_separated_by_t_gap2():
    p = SchedulerParams()
    vs = [veh(1, "EB", 300.0), veh(2, "NB", 300.0)]
    r = solve_schedule(vs, p, 0.0)
    t1, t2 = r.assignments[1], r.assignments[2]
    assert abs(t1 - t2) == pytest.approx(7.5, abs=1e-7)
    # the leader is pulled as early as its kinematic floor allows
    floor = compute_t_access_min(vs[0], p, 0.0)
    assert min(t1, t2) == pytest.approx(max(floor, 300.0 / V_AVG - 7.5), abs=1e-7)
    assert validate_schedule(vs, r.assignments, p) == []


def test_unconflicted_vehicles_get_desired_times():
    p = SchedulerParams()
    vs = [veh(1, "EB", 300.0), veh(2, "WB", 100.0), veh(3, "EB", 600.0)]
    r = solve_schedule(vs, p, 5.0)
    for v in vs:
        assert r.assignments[v.id] == pytest.approx(5.0 + v.distance_to_access / V_AVG, abs=1e-7)


def test_model_shape():
    p = SchedulerParams()
    vs = [veh(1, "EB", 100.0), veh(2, "NB", 150.0), veh(3, "EB", 200.0), veh(4, "SB", 250.0)]
    sm = build_schedule_model(vs, p, 0.0)
    assert len(sm.pair_binaries) == 4           # 2 O x 2 X
    assert len(sm.model.variables) == 2 * 4 + 4
    assert [v.id for v in sm.vehicles] == [1, 2, 3, 4]
    assert sm.makespan_var == sm.t_vars[4]
    free = build_schedule_model(vs, SchedulerParams(makespan_mode="free_max"), 0.0)
    assert len(free.model.variables) == 2 * 4 + 4 + 1


def test_model_input_errors():
    p = SchedulerParams()
    with pytest.raises(ValueError):
        build_schedule_model([], p, 0.0)
    with pytest.raises(ValueError):
        build_schedule_model([veh(1, "EB", 10.0), veh(1, "NB", 20.0)], p, 0.0)
    with pytest.raises(ValueError):
        build_schedule_model([veh(1, "EB", 10.0), Vehicle(2, 2, "EB", "O", 10.0, 10.0)], p, 0.0)
    with pytest.raises(ScheduleInfeasible):
        solve_schedule([veh(1, "EB", 5000.0)], p, 0.0)


def test_frozen_vehicle_keeps_time_and_others_yield():
    p = SchedulerParams()
    frozen = veh(1, "EB", -10.0, t_access_assigned=3.0, inside_access_area=True)
    other = veh(2, "NB", 20.0)
    r = solve_schedule([frozen, other], p, 4.0)
    assert r.assignments[1] == 3.0
    assert r.assignments[2] >= 3.0 + 7.5 - 1e-9


def random_vehicles(rng, n):
    mvs = ["EB", "WB", "NB", "SB"]
    return [veh(i, mvs[int(rng.integers(0, 4))], float(rng.uniform(5, 600)), float(rng.uniform(0, V_MAX)))
            for i in range(n)]


def test_schedule_matches_brute_force():
    rng = np.random.default_rng(21)
    p = SchedulerParams()
    checked = 0
    while checked < 25:
        vs = random_vehicles(rng, int(rng.integers(2, 7)))
        sm = build_schedule_model(vs, p, 0.0)
        if len(sm.pair_binaries) > 8:
            continue
        r = solve_schedule(vs, p, 0.0)
        assert r.solve_status is Status.OPTIMAL
        assert r.objective == pytest.approx(brute_force(sm.model), abs=1e-6)
        assert validate_schedule(vs, r.assignments, p) == []
        checked += 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12))
def test_greedy_list_schedule_is_feasible(seed, n):
    rng = np.random.default_rng(seed)
    p = SchedulerParams()
    vs = random_vehicles(rng, n)
    sm = build_schedule_model(vs, p, 0.0)
    for stick in (-math.inf, 0.0, 7.5, math.inf):
        times = list_schedule(sm, p, stick)
        assert validate_schedule(vs, times, p) == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_node_capped_schedule_still_valid(seed):
    rng = np.random.default_rng(seed)
    p = SchedulerParams(max_nodes=5)
    vs = random_vehicles(rng, 10)
    r = solve_schedule(vs, p, 0.0)
    assert r.solve_status in (Status.OPTIMAL, Status.ITERATION_LIMIT)
    assert validate_schedule(vs, r.assignments, p) == []


def test_validate_reports_each_rule():
    p = SchedulerParams()
    vs = [veh(1, "EB", 100.0), veh(2, "EB", 150.0), veh(3, "NB", 120.0)]
    bad = validate_schedule(vs, {1: 1.0, 2: 1.5, 3: 5.0}, p)
    kinds = {v.kind for v in bad}
    assert kinds == {"access_min", "same_movement", "cross_phase"}
    same = [v for v in bad if v.kind == "same_movement"]
    assert same[0].vehicles == (1, 2) and same[0].amount == pytest.approx(0.5)
    cross = {v.vehicles: v.amount for v in bad if v.kind == "cross_phase"}
    assert cross == {(1, 3): pytest.approx(3.5), (3, 2): pytest.approx(4.0)}


def test_access_velocity_drives_headway():
    p = SchedulerParams()
    slow = veh(2, "EB", 20.0, v=1.0)
    assert compute_t_gap1(slow.gap_velocity, p) == pytest.approx(2.5)
    fast = veh(2, "EB", 20.0, v=1.0, access_velocity=V_AVG)
    assert compute_t_gap1(fast.gap_velocity, p) == pytest.approx(1.0)


def test_with_assignment():
    v = with_assignment(veh(1, "EB", 10.0), 4.5)
    assert v.t_access_assigned == 4.5 and not v.frozen
