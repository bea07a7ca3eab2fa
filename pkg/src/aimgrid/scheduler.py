"""Access-time scheduling for one intersection as a MILP.

Each subscribed vehicle gets a continuous access time ``t_i`` and an
absolute-deviation slack ``e_i``. Constraints:

* kinematic floor ``t_i >= t_min_i`` (accelerate at ``a_max`` to ``v_max``),
* consecutive vehicles on the same movement separated by ``t_gap1`` of the
  follower,
* vehicles on different phases separated by ``t_gap2`` in either order,
  encoded with one binary per pair and a big-M constant.

The objective is ``w1 * makespan + w2 * sum(e_i)`` plus two tiny
tie-break terms (see ``SchedulerParams``) that pick, among equally good
schedules, the one with less deviation and then earlier access.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

from .milp import DANTZIG, LinExpr, MilpModel, Sense, SolverOptions, Status, VarKind, solve_milp

MPH = 0.44704
KPH = 1 / 3.6

V_MAX = 72.4 * KPH
V_AVG = 56.3 * KPH


class MakespanMode(enum.Enum):
    LAST_VEHICLE_FIXED = "last_vehicle_fixed"
    FREE_MAX = "free_max"


@dataclass(frozen=True)
class IntersectionGeometry:
    width: float = 10.0
    d_access: float = 0.0

    def __post_init__(self):
        if self.width <= 0 or self.d_access <= 0:
            raise ValueError("intersection width and access depth must be positive")

    @classmethod
    def from_speeds(cls, v_avg: float = V_AVG, a_max: float = 2.0, width: float = 10.0,
                    reaction: float = 2.0) -> "IntersectionGeometry":
        """Access depth as braking distance from ``v_avg`` plus a reaction buffer."""
        return cls(width, v_avg ** 2 / (2 * a_max) + reaction * v_avg)


@dataclass(frozen=True)
class Vehicle:
    """One subscribed vehicle as seen by an intersection controller.

    ``inside_access_area`` marks a vehicle past the access point; if it also
    has ``t_access_assigned`` its time is frozen in later solves.
    ``t_access_min`` overrides the kinematic floor (used for neighbor
    handoff entries whose state is only known upstream).
    """

    id: Hashable
    intersection: Hashable
    movement: str
    phase: str
    distance_to_access: float
    velocity: float
    t_access_desired: Optional[float] = None
    t_access_assigned: Optional[float] = None
    t_exit: Optional[float] = None
    length: float = 5.0
    inside_access_area: bool = False
    t_access_min: Optional[float] = None
    handoff: bool = False
    # expected speed when crossing the access point; the headway rule uses it when set
    access_velocity: Optional[float] = None

    @property
    def frozen(self) -> bool:
        return self.inside_access_area and self.t_access_assigned is not None

    @property
    def gap_velocity(self) -> float:
        return self.velocity if self.access_velocity is None else self.access_velocity


@dataclass
class SchedulerParams:
    w1: float = 1.0
    w2: float = 1.0
    t_gap2: float = 7.5
    v_max: float = V_MAX
    v_avg: float = V_AVG
    a_max: float = 2.0
    horizon: float = 200.0
    big_m: Optional[float] = None
    headway_floor: float = 1.0
    v_still: float = 2.0
    v_slow: float = 10.0
    vehicle_length: float = 5.0
    makespan_mode: MakespanMode = MakespanMode.LAST_VEHICLE_FIXED
    # lexicographic tie-breaks: less total deviation first, then earlier access
    deviation_tiebreak: float = 1e-3
    earliness_tiebreak: float = 1e-4
    max_nodes: Optional[int] = None
    # simplex pricing for the relaxations (DANTZIG falls back to Bland when stalling)
    lp_rule: int = DANTZIG
    # seed branch-and-bound with the greedy list schedule as first incumbent
    seed_incumbent: bool = True

    def __post_init__(self):
        self.makespan_mode = MakespanMode(self.makespan_mode)
        if self.big_m is None:
            self.big_m = self.horizon + self.t_gap2
        if self.w1 < 0 or self.w2 < 0 or (self.w1 == 0 and self.w2 == 0):
            raise ValueError("weights must be nonnegative and not both zero")
        if self.t_gap2 <= 0:
            raise ValueError("t_gap2 must be positive")
        if not 0 < self.v_avg <= self.v_max:
            raise ValueError("need 0 < v_avg <= v_max")
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")
        if self.big_m <= self.horizon + self.t_gap2 - 1e-9:
            raise ValueError("big_m must exceed horizon + t_gap2")


@dataclass
class ScheduleResult:
    assignments: Dict[Hashable, float]
    objective: float
    solve_status: Status
    solve_wall_time: float
    t_min: Dict[Hashable, float] = field(default_factory=dict)
    t_desired: Dict[Hashable, float] = field(default_factory=dict)
    nodes: int = 0


@dataclass(frozen=True)
class Violation:
    kind: str  # "access_min", "same_movement" or "cross_phase"
    vehicles: Tuple[Hashable, ...]
    amount: float


class ScheduleInfeasible(RuntimeError):
    def __init__(self, message: str, conflicts: Sequence[Tuple[Hashable, Hashable]]):
        super().__init__(message)
        self.conflicts = list(conflicts)


def compute_t_access_min(vehicle: Vehicle, params: SchedulerParams, now: float) -> float:
    """Earliest access time: accelerate at ``a_max`` up to ``v_max``, then cruise."""
    if vehicle.t_access_min is not None:
        return vehicle.t_access_min
    d = vehicle.distance_to_access
    if d <= 0:
        return now
    v = min(max(vehicle.velocity, 0.0), params.v_max)
    a, vm = params.a_max, params.v_max
    d_ramp = (vm * vm - v * v) / (2 * a)
    if d <= d_ramp:
        t = (-v + math.sqrt(v * v + 2 * a * d)) / a
    else:
        t = (vm - v) / a + (d - d_ramp) / vm
    return now + t


def compute_t_desired(vehicle: Vehicle, params: SchedulerParams, now: float) -> float:
    if vehicle.t_access_desired is not None:
        return vehicle.t_access_desired
    return now + max(vehicle.distance_to_access, 0.0) / params.v_avg


def compute_t_gap1(follower_velocity: float, params: SchedulerParams,
                   vehicle_length: Optional[float] = None) -> float:
    """Same-movement headway at the access point for a follower at this speed.

    Piecewise: the body-clearing time at crawl speed when nearly stopped,
    the 1 s floor when cruising, and in between a braking allowance that
    shrinks linearly to the floor at ``v_slow``.
    """
    length = params.vehicle_length if vehicle_length is None else vehicle_length
    standstill = max(params.headway_floor, length / params.v_still)
    v = follower_velocity
    if v < params.v_still:
        return standstill
    if v < params.v_slow:
        return min(standstill, params.headway_floor + (params.v_slow - v) / (2 * params.a_max))
    return params.headway_floor


def sort_vehicles(vehicles: Sequence[Vehicle]) -> List[Vehicle]:
    """Closest first; vehicles already inside the access area by their fixed time."""
    def key(v):
        frozen_t = v.t_access_assigned if v.frozen else math.inf
        return (max(v.distance_to_access, 0.0), frozen_t, str(v.id))
    return sorted(vehicles, key=key)


def _same_movement_pairs(ordered: Sequence[Vehicle]):
    last: Dict[str, int] = {}
    for idx, veh in enumerate(ordered):
        if veh.movement in last:
            yield last[veh.movement], idx
        last[veh.movement] = idx


@dataclass
class ScheduleModel:
    model: MilpModel
    vehicles: List[Vehicle]
    t_vars: Dict[Hashable, int]
    e_vars: Dict[Hashable, int]
    pair_binaries: Dict[Tuple[Hashable, Hashable], int]
    makespan_var: int
    t_min: Dict[Hashable, float]
    t_desired: Dict[Hashable, float]


def build_schedule_model(vehicles: Sequence[Vehicle], params: SchedulerParams,
                         now: float) -> ScheduleModel:
    """Assemble the scheduling MILP for the vehicles of one intersection."""
    if not vehicles:
        raise ValueError("no vehicles to schedule")
    ids = {v.intersection for v in vehicles}
    if len(ids) > 1:
        raise ValueError(f"vehicles belong to several intersections: {sorted(map(str, ids))}")
    if len({v.id for v in vehicles}) != len(vehicles):
        raise ValueError("duplicate vehicle ids")

    ordered = sort_vehicles(vehicles)
    model = MilpModel(f"intersection_{next(iter(ids))}")
    t_vars, e_vars, t_min, t_des = {}, {}, {}, {}
    upper = now + params.horizon
    for veh in ordered:
        if veh.frozen:
            lo = hi = float(veh.t_access_assigned)
            des = lo
        else:
            lo = compute_t_access_min(veh, params, now)
            des = compute_t_desired(veh, params, now)
            hi = upper
            if lo > hi:
                raise ScheduleInfeasible(f"vehicle {veh.id} cannot arrive within the horizon", [])
        t_min[veh.id], t_des[veh.id] = lo, des
        t_vars[veh.id] = model.add_variable(VarKind.CONTINUOUS, lo, hi, f"t_{veh.id}")
    for veh in ordered:
        e = model.add_variable(VarKind.CONTINUOUS, 0.0, math.inf, f"e_{veh.id}")
        e_vars[veh.id] = e
        t = t_vars[veh.id]
        model.add_constraint(LinExpr({e: 1.0, t: -1.0}), Sense.GE, -t_des[veh.id], f"dev_hi_{veh.id}")
        model.add_constraint(LinExpr({e: 1.0, t: 1.0}), Sense.GE, t_des[veh.id], f"dev_lo_{veh.id}")

    for k, j in _same_movement_pairs(ordered):
        lead, foll = ordered[k], ordered[j]
        if lead.frozen and foll.frozen:
            continue
        gap = compute_t_gap1(foll.gap_velocity, params, foll.length)
        model.add_constraint(LinExpr({t_vars[foll.id]: 1.0, t_vars[lead.id]: -1.0}), Sense.GE, gap,
                             f"gap1_{lead.id}_{foll.id}")

    pair_binaries = {}
    M, g2 = params.big_m, params.t_gap2
    for a in range(len(ordered)):
        for b in range(a + 1, len(ordered)):
            vj, vk = ordered[a], ordered[b]
            if vj.phase == vk.phase:
                continue
            tj, tk = t_vars[vj.id], t_vars[vk.id]
            if vj.frozen and vk.frozen:
                continue
            if vj.frozen or vk.frozen:
                # the frozen vehicle has already accessed; the other must follow it
                first, second = (tj, tk) if vj.frozen else (tk, tj)
                model.add_constraint(LinExpr({second: 1.0, first: -1.0}), Sense.GE, g2,
                                     f"gap2_{vj.id}_{vk.id}")
                continue
            y = model.add_variable(VarKind.BINARY, 0, 1, f"y_{vj.id}_{vk.id}")
            pair_binaries[(vj.id, vk.id)] = y
            # y = 1: vj after vk; y = 0: vk after vj
            model.add_constraint(LinExpr({tj: 1.0, tk: -1.0, y: -M}), Sense.GE, g2 - M,
                                 f"gap2a_{vj.id}_{vk.id}")
            model.add_constraint(LinExpr({tk: 1.0, tj: -1.0, y: M}), Sense.GE, g2,
                                 f"gap2b_{vj.id}_{vk.id}")

    last = ordered[-1]
    if params.makespan_mode is MakespanMode.LAST_VEHICLE_FIXED:
        makespan = t_vars[last.id]
        for veh in ordered[:-1]:
            model.add_constraint(LinExpr({makespan: 1.0, t_vars[veh.id]: -1.0}), Sense.GE, 0.0,
                                 f"last_{veh.id}")
    else:
        makespan = model.add_variable(VarKind.CONTINUOUS, -math.inf, math.inf, "makespan")
        for veh in ordered:
            model.add_constraint(LinExpr({makespan: 1.0, t_vars[veh.id]: -1.0}), Sense.GE, 0.0,
                                 f"max_{veh.id}")

    obj = LinExpr({makespan: params.w1}, -params.w1 * now)
    w_dev = params.w2 + params.deviation_tiebreak
    for veh in ordered:
        obj = obj + LinExpr({e_vars[veh.id]: w_dev})
        if params.earliness_tiebreak and not veh.frozen:
            obj = obj + LinExpr({t_vars[veh.id]: params.earliness_tiebreak}, -params.earliness_tiebreak * now)
    model.set_objective(obj)
    return ScheduleModel(model, ordered, t_vars, e_vars, pair_binaries, makespan, t_min, t_des)


def list_schedule(sm: ScheduleModel, params: SchedulerParams, stick: float = 0.0,
                  gaps: Optional[Mapping[Hashable, float]] = None) -> Dict[Hashable, float]:
    """Greedy feasible times built one movement head at a time.

    Frozen vehicles keep their times. Each admitted vehicle goes no earlier
    than its desired time, ``t_gap1`` after its movement predecessor and
    ``t_gap2`` after every vehicle already admitted on the other phase. The
    phase served last keeps going while its best head can go within
    ``stick`` seconds of the other phase's best head (``stick = 0`` is plain
    earliest-first, larger values form longer platoons and negative values
    hand over to a waiting phase sooner). The farthest
    vehicle is admitted last when it defines the makespan. ``gaps`` caches
    each vehicle's ``t_gap1``.
    """
    if gaps is None:
        gaps = {v.id: compute_t_gap1(v.gap_velocity, params, v.length) for v in sm.vehicles}
    times: Dict[Hashable, float] = {}
    queues: Dict[str, List[Vehicle]] = {}
    last_mv: Dict[str, float] = {}
    last_phase: Dict[str, float] = {}
    current = None
    for veh in sm.vehicles:
        if veh.frozen:
            t = sm.t_min[veh.id]
            times[veh.id] = t
            last_mv[veh.movement] = max(last_mv.get(veh.movement, -math.inf), t)
            if t >= last_phase.get(veh.phase, -math.inf):
                last_phase[veh.phase] = t
            if current is None or t >= last_phase.get(current, -math.inf):
                current = veh.phase
        else:
            queues.setdefault(veh.movement, []).append(veh)
    heads = {mv: 0 for mv in queues}
    rank = {id(v): k for k, v in enumerate(sm.vehicles)}
    final = sm.vehicles[-1] if params.makespan_mode is MakespanMode.LAST_VEHICLE_FIXED else None
    left = sum(len(q) for q in queues.values())
    while left:
        best: Dict[str, Tuple[float, Vehicle]] = {}
        for mv in sorted(queues):
            if heads[mv] >= len(queues[mv]):
                continue
            veh = queues[mv][heads[mv]]
            if veh is final and left > 1:
                continue
            t = max(sm.t_desired[veh.id], sm.t_min[veh.id])
            if mv in last_mv:
                t = max(t, last_mv[mv] + gaps[veh.id])
            for ph, tl in last_phase.items():
                if ph != veh.phase:
                    t = max(t, tl + params.t_gap2)
            if veh.phase not in best or t < best[veh.phase][0] - 1e-9:
                best[veh.phase] = (t, veh)
        others = [tv for ph, tv in best.items() if ph != current]
        if current in best and all(best[current][0] <= t + stick for t, _ in others):
            pick_t, pick = best[current]
        else:
            pick_t, pick = min(others, key=lambda tv: (tv[0], rank[id(tv[1])]))
        if pick is final:
            pick_t = max([pick_t] + list(times.values()))
        times[pick.id] = pick_t
        heads[pick.movement] += 1
        left -= 1
        current = pick.phase
        last_mv[pick.movement] = pick_t
        last_phase[pick.phase] = max(last_phase.get(pick.phase, -math.inf), pick_t)
    return times


# platoon thresholds tried when seeding the incumbent
STICK_CANDIDATES = (-math.inf, -15.0, -7.5, -5.0, -2.5, 0.0, 2.5, 5.0, 7.5, 10.0, 15.0, 30.0, math.inf)


def _schedule_objective(sm: ScheduleModel, times: Mapping[Hashable, float]) -> float:
    values = {}
    for vid, t in times.items():
        values[sm.t_vars[vid]] = t
        values[sm.e_vars[vid]] = abs(t - sm.t_desired[vid])
    if sm.makespan_var not in values:
        values[sm.makespan_var] = max(times.values())
    for (a, b), y in sm.pair_binaries.items():
        values[y] = float(times[a] > times[b])
    return sm.model.objective.evaluate(values)


def _start_values(sm: ScheduleModel, params: SchedulerParams) -> Dict[int, float]:
    """Binary fixings of the best greedy schedule over the platoon thresholds."""
    best, best_obj = None, math.inf
    gaps = {v.id: compute_t_gap1(v.gap_velocity, params, v.length) for v in sm.vehicles}
    for stick in STICK_CANDIDATES:
        times = list_schedule(sm, params, stick, gaps)
        obj = _schedule_objective(sm, times)
        if obj < best_obj - 1e-9:
            best, best_obj = times, obj
    # y = 1 means the first vehicle of the pair goes after the second
    return {y: float(best[a] > best[b]) for (a, b), y in sm.pair_binaries.items()}


def _diagnose(sm: ScheduleModel, params: SchedulerParams):
    """Pairs whose time windows cannot meet their separation rule."""
    out = []
    lo = {v: sm.model.variables[i].lower for v, i in sm.t_vars.items()}
    hi = {v: sm.model.variables[i].upper for v, i in sm.t_vars.items()}
    vs = sm.vehicles
    for a in range(len(vs)):
        for b in range(a + 1, len(vs)):
            x, y = vs[a].id, vs[b].id
            if vs[a].phase != vs[b].phase:
                ok = hi[x] - lo[y] >= params.t_gap2 or hi[y] - lo[x] >= params.t_gap2
            elif vs[a].movement == vs[b].movement:
                ok = hi[y] - lo[x] >= params.headway_floor
            else:
                ok = True
            if not ok:
                out.append((x, y))
    return out


def solve_schedule(vehicles: Sequence[Vehicle], params: SchedulerParams, now: float,
                   options: Optional[SolverOptions] = None) -> ScheduleResult:
    """Build and solve the intersection MILP; raise ScheduleInfeasible on failure."""
    t0 = time.perf_counter()
    sm = build_schedule_model(vehicles, params, now)
    opts = options or SolverOptions(max_nodes=params.max_nodes)
    start = _start_values(sm, params) if params.seed_incumbent else None
    sol = solve_milp(sm.model, opts, params.lp_rule, start)
    wall = time.perf_counter() - t0
    if not sol.values:
        raise ScheduleInfeasible(f"schedule solve failed: {sol.status.value}", _diagnose(sm, params))
    assignments = {vid: sol.values[var] for vid, var in sm.t_vars.items()}
    return ScheduleResult(assignments, sol.objective, sol.status, wall, sm.t_min, sm.t_desired, sol.nodes)


def validate_schedule(vehicles: Sequence[Vehicle], assignments: Mapping[Hashable, float],
                      params: SchedulerParams, now: float = 0.0, tol: float = 1e-6) -> List[Violation]:
    """Independent check of the floor, same-movement and cross-phase rules.

    Pairs of vehicles that are both frozen are history and are not checked.
    """
    out: List[Violation] = []
    ordered = sort_vehicles(vehicles)
    t = {v.id: assignments[v.id] for v in ordered}
    for veh in ordered:
        if veh.frozen:
            continue
        floor = compute_t_access_min(veh, params, now)
        if t[veh.id] < floor - tol:
            out.append(Violation("access_min", (veh.id,), floor - t[veh.id]))
    for k, j in _same_movement_pairs(ordered):
        lead, foll = ordered[k], ordered[j]
        if lead.frozen and foll.frozen:
            continue
        gap = compute_t_gap1(foll.gap_velocity, params, foll.length)
        short = gap - (t[foll.id] - t[lead.id])
        if short > tol:
            out.append(Violation("same_movement", (lead.id, foll.id), short))
    for a in range(len(ordered)):
        for b in range(a + 1, len(ordered)):
            vj, vk = ordered[a], ordered[b]
            if vj.phase == vk.phase or (vj.frozen and vk.frozen):
                continue
            short = params.t_gap2 - abs(t[vj.id] - t[vk.id])
            if short > tol:
                out.append(Violation("cross_phase", (vj.id, vk.id), short))
    return out


def with_assignment(vehicle: Vehicle, t_access: float) -> Vehicle:
    return replace(vehicle, t_access_assigned=t_access)
