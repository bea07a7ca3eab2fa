import numpy as np
import pytest

from aimgrid.scheduler import V_AVG, V_MAX
from aimgrid.sim import (GRID_RATES, DriverSettings, SimConfig, Simulation, arrival_times, grid_config,
                         webster_plan)
from aimgrid.sim import kernel as K
from aimgrid.sim.signals import GREEN, RED, YELLOW, cycle_state, plan_arrays
from aimgrid.topology import GridTopology
from helpers import cross_phase_overlaps, min_bumper_gap


def test_arrivals_seeded_and_independent_per_link():
    a = arrival_times([600.0, 300.0], 3600.0, 4, 1.5)
    b = arrival_times([600.0, 300.0], 3600.0, 4, 1.5)
    c = arrival_times([600.0, 900.0], 3600.0, 4, 1.5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert np.array_equal(a[0], c[0]) and not np.array_equal(a[1], c[1])
    assert np.all(np.diff(a[0]) >= 1.5) and a[0].max() < 3600.0
    assert arrival_times([0.0], 100.0, 0, 1.5)[0].size == 0


def test_arrival_rate_statistics():
    n = [len(arrival_times([720.0], 3600.0, s, 1.5)[0]) for s in range(30)]
    # exponential gaps with a 1.5 s floor: mean gap 5 + 1.5 * exp(-1.5 / 5)... close to 720/h
    assert 650 < np.mean(n) < 720


@pytest.mark.parametrize("qo,qx,cycle,g_o,g_x", [(360, 360, 30.0, 9.0, 9.0), (900, 450, 68.0, 38.0, 18.0)])
def test_webster_plan_by_hand(qo, qx, cycle, g_o, g_x):
    plan = webster_plan({"O": qo, "X": qx})
    assert plan.cycle == pytest.approx(cycle)
    assert plan.phases["O"].green == pytest.approx(g_o)
    assert plan.phases["X"].green == pytest.approx(g_x)
    assert plan.effective_green("O") == pytest.approx(g_o + 2.0)
    assert plan.state("O", 0.0) == GREEN
    assert plan.state("O", g_o + 1.0) == YELLOW
    assert plan.state("O", g_o + 5.5) == RED
    assert plan.state("X", g_o + 6.0 + 0.1) == GREEN
    row = plan_arrays({1: plan}, [1])[0]
    for t in np.linspace(0, 2 * cycle, 97):
        for k, ph in enumerate("OX"):
            assert cycle_state(row, k, t) == plan.state(ph, t)


def test_webster_saturated_uses_max_cycle():
    assert webster_plan({"O": 1000, "X": 800}).cycle == pytest.approx(150.0)


def test_config_validation():
    topo = GridTopology.grid()
    with pytest.raises(ValueError):
        SimConfig(topo, testbed="E")
    with pytest.raises(ValueError):
        SimConfig(topo, injection_rates=[1.0])
    with pytest.raises(ValueError):
        SimConfig(topo, dt=0.7)
    with pytest.raises(ValueError):
        SimConfig(topo, injection_rates=[-1.0] * 12)
    assert grid_config("A").injection_rates == GRID_RATES
    assert len(GRID_RATES) == 12


def params_vector():
    return Simulation(grid_config("C", duration=1.0)).P


def test_track_access_reaches_access_point_on_time():
    P = params_vector()
    dt = P[K.P_DT]
    for d, rem in [(300.0, 300.0 / V_AVG), (300.0, 30.0), (300.0, 45.0), (150.0, 60.0), (400.0, 22.0)]:
        x, v, t = 0.0, V_AVG, 0.0
        while x < d and t < 200:
            a = K.track_access(d - x, rem - t, v, P)
            a = min(max(a, -P[K.P_AMAX]), P[K.P_AMAX])
            a = min(a, (V_MAX - v) / dt)
            a = max(a, -v / dt)
            x += v * dt + 0.5 * a * dt * dt
            v += a * dt
            t += dt
        assert t == pytest.approx(rem, abs=0.6)
        if d / rem < P[K.P_ARRMIN]:
            # slow approaches never crawl across the access point
            assert v > P[K.P_ARRMIN] - 0.5


def test_advisory_speed():
    P = params_vector()
    P[K.P_ADVMIN] = 8.0
    plan = webster_plan({"O": 900, "X": 450})
    plans = plan_arrays({1: plan}, [1])
    # phase X is red until t = 44; a vehicle 300 m out at t = 10
    v = K.advisory_speed(300.0, 10.0, plans, 0, 1, 0, P)
    assert v == pytest.approx(300.0 / (44.0 + P[K.P_ADVM] - 10.0))
    # too slow an advisory is not issued
    assert K.advisory_speed(300.0, 0.0, plans, 0, 1, 0, P) == pytest.approx(V_AVG)
    assert K.advisory_speed(100.0, 0.0, plans, 0, 1, 0, P) == pytest.approx(V_AVG)
    # arriving inside a green needs no change
    assert K.advisory_speed(100.0, 45.0, plans, 0, 1, 0, P) == pytest.approx(V_AVG)


def test_single_vehicle_free_flow():
    rates = [0.0] * 12
    rates[2] = 60.0
    for tb in "CD":
        res = Simulation(grid_config(tb, seed=3, duration=400.0, injection_rates=rates)).run()
        v = res.vehicles
        done = ~np.isnan(v["t_done"])
        assert done.sum() >= 1
        travel = (v["t_done"] - v["t_inject"])[done]
        assert np.all(v["stops"] == 0)
        assert np.all(np.abs(travel - 1600.0 / V_AVG) < 3.0)


def test_empty_network():
    res = Simulation(grid_config("D", duration=60.0, injection_rates=[0.0] * 12)).run()
    assert res.injected == 0 and len(res.store) == 0
    assert res.queue.shape == (60, 9, 2)


def test_trajectories_are_physical(short_runs):
    for tb, (res, _) in short_runs.items():
        d = res.store.data
        assert np.all(d["velocity"] >= -1e-12) and np.all(d["velocity"] <= V_MAX + 1e-9)
        assert np.all(np.abs(d["acceleration"]) <= 2.0 + 1e-9)
        same = d["vehicle"][1:] == d["vehicle"][:-1]
        assert np.all(np.diff(d["position"])[same] >= -1e-9)
        assert np.all(np.diff(d["time"])[same] > 0)


def test_no_cross_phase_box_overlap_and_positive_gaps(short_runs):
    for tb, (res, _) in short_runs.items():
        assert cross_phase_overlaps(res) == 0, tb
        assert min_bumper_gap(res) > 0.0, tb


def test_fixed_time_vehicles_never_enter_on_red(short_runs):
    for tb in "AB":
        res, _ = short_runs[tb]
        ev = res.events
        ok = ~np.isnan(ev["t_enter"])
        cors = res.config.topology.corridors
        corr = res.vehicles["corridor"][ev["vehicle"][ok]]
        for ident, te, c in zip(ev["intersection"][ok], ev["t_enter"][ok], corr):
            assert res.plans[ident].state(cors[c].phase, te) != RED


def test_milp_vehicles_follow_assignments(short_runs):
    for tb in "CD":
        res, _ = short_runs[tb]
        ev = res.events
        ok = ~np.isnan(ev["t_access"]) & ~np.isnan(ev["t_access_assigned"])
        late = ev["t_access"][ok] - ev["t_access_assigned"][ok]
        assert ok.sum() > 100
        assert np.median(np.abs(late)) < 0.5


def test_until_round_stops_before_that_solve():
    sim = Simulation(grid_config("D", seed=0, duration=120.0))
    sim.run(until_round=3)
    assert sim.t_stop == pytest.approx(18.0)
    assert len(sim.rounds) == 3


def test_store_csv_and_digest(short_runs):
    res, _ = short_runs["C"]
    text = res.store.to_csv()
    head, first = text.splitlines()[:2]
    assert head == "vehicle,time,position,velocity,acceleration,link,signal,t_access"
    assert first.startswith("0,")
    assert len(res.store.digest()) == 64


def test_advisory_floor_setting_reaches_kernel():
    sim = Simulation(grid_config("B", duration=1.0, driver=DriverSettings(advisory_min_speed=3.0)))
    assert sim.P[K.P_ADVMIN] == 3.0
