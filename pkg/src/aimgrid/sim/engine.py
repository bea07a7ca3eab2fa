"""Simulation driver: injection, control rounds, stepping and event logging."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from ..coordination import CoordinationMode, Coordinator, MessageKind
from ..scheduler import IntersectionGeometry, Vehicle
from . import kernel as K
from .config import SimConfig
from .injection import arrival_times
from .signals import critical_flows, plan_arrays, webster_plan
from .store import TrajectoryStore

TESTBED_CODE = {"A": K.TB_A, "B": K.TB_B, "C": K.TB_C, "D": K.TB_D}


class InvariantViolation(RuntimeError):
    """A safety or legality invariant broke mid-run; carries diagnostics."""

    def __init__(self, message: str, details: dict):
        super().__init__(message)
        self.details = details


@dataclass
class RoundStats:
    round: int
    time: float
    vehicles: int
    solve_time: float
    max_solve_time: float
    nodes: int
    failures: int


@dataclass
class SimResult:
    config: SimConfig
    vehicles: Dict[str, np.ndarray]
    events: Dict[str, np.ndarray]
    store: TrajectoryStore
    queue_time: np.ndarray
    queue: np.ndarray            # (samples, intersections, 2) vehicles queued per phase
    rounds: List[RoundStats] = field(default_factory=list)
    coordinator: Optional[Coordinator] = None
    plans: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def injected(self) -> int:
        return len(self.vehicles["id"])

    @property
    def completed(self) -> int:
        return int(np.sum(~np.isnan(self.vehicles["t_done"])))

    @property
    def in_network(self) -> int:
        return self.injected - self.completed


class Simulation:
    def __init__(self, config: SimConfig, round_hook: Optional[Callable] = None):
        self.cfg = cfg = config
        self.topo = topo = config.topology
        self.round_hook = round_hook
        geom = topo.geometry
        self.geometry = geom if isinstance(geom, IntersectionGeometry) else IntersectionGeometry.from_speeds()
        self.testbed = TESTBED_CODE[cfg.testbed]
        self.fixed_time = cfg.testbed in ("A", "B")

        cors = topo.corridors
        self.row_of = {ident: r for r, ident in enumerate(topo.intersections)}
        nl = max(len(c.intersections) for c in cors)
        self.c_nlegs = np.array([len(c.intersections) for c in cors], dtype=np.int64)
        self.c_bar = np.full((len(cors), nl), np.nan)
        self.c_int = np.zeros((len(cors), nl), dtype=np.int64)
        for c in cors:
            for k, (ident, bar) in enumerate(zip(c.intersections, c.stop_bars)):
                self.c_bar[c.index, k] = bar
                self.c_int[c.index, k] = self.row_of[ident]
        self.c_phase = np.array([0 if c.phase == "O" else 1 for c in cors], dtype=np.int64)
        self.c_len = np.array([c.length for c in cors])
        self.n_legs_max = nl

        d = cfg.driver
        f = cfg.fuel
        P = np.zeros(K.N_PARAMS)
        P[K.P_DT], P[K.P_VMAX], P[K.P_VAVG], P[K.P_AMAX] = cfg.dt, cfg.v_max, cfg.v_avg, cfg.a_max
        P[K.P_DACC], P[K.P_WIDTH] = self.geometry.d_access, self.geometry.width
        P[K.P_G0], P[K.P_TAU], P[K.P_GAIN], P[K.P_MARGIN] = d.min_gap, d.time_headway, d.tracking_gain, d.stop_margin
        P[K.P_DET], P[K.P_ADV], P[K.P_QINFO] = d.detection_range, d.advisory_range, d.queue_info_range
        P[K.P_HDIS], P[K.P_ADVM], P[K.P_LOOK] = d.discharge_headway, d.advisory_margin, d.interlock_lookahead
        P[K.P_QSPEED], P[K.P_QRANGE] = cfg.queue_speed, cfg.queue_range
        P[K.P_MASS], P[K.P_CDA], P[K.P_RHO], P[K.P_CRR] = f.mass, f.drag_area, f.air_density, f.rolling
        P[K.P_IDLE], P[K.P_GPJ], P[K.P_GRAV] = f.idle_rate, f.fuel_per_energy, f.gravity
        P[K.P_SLOW], P[K.P_SHIGH] = cfg.stop_low, cfg.stop_high
        P[K.P_ADVMIN] = d.advisory_min_speed
        P[K.P_ARRMIN] = d.arrival_min_speed
        self.P = P

        rates = {k: r for k, r in enumerate(cfg.injection_rates)}
        if self.fixed_time:
            s = cfg.signals
            crit = critical_flows(topo, rates)
            self.plans = {i: webster_plan(crit[i], s.saturation_flow, s.lost_time, s.yellow, s.all_red,
                                          s.min_cycle, s.max_cycle) for i in topo.intersections}
            self.plan_table = plan_arrays(self.plans, topo.intersections)
        else:
            self.plans = {}
            self.plan_table = np.ones((len(topo.intersections), 8))

        self.arrivals = arrival_times(cfg.injection_rates, cfg.duration, cfg.seed, cfg.min_spawn_headway)
        cap = sum(len(a) for a in self.arrivals)
        self._alloc(cap)
        self.coordinator = None
        if not self.fixed_time:
            mode = CoordinationMode.COORDINATED if cfg.testbed == "D" else CoordinationMode.UNCOORDINATED
            params = cfg.scheduler
            self.coordinator = Coordinator(topo, params, mode, transcript=cfg.transcript)
        self.link_index = np.zeros((len(cors), nl + 1), dtype=np.int64)
        names = [l.name for l in topo.links]
        for c in cors:
            entry = topo.entry_links[c.index]
            self.link_index[c.index, 0] = names.index(entry.name)
            for k, ident in enumerate(c.intersections):
                self.link_index[c.index, k + 1] = names.index(topo.link_from(ident, c.movement).name)
        self.link_names = names

    def _alloc(self, cap: int):
        nl = self.n_legs_max
        self.n = 0
        self.corr = np.zeros(cap, dtype=np.int64)
        self.pos = np.zeros(cap)
        self.vel = np.zeros(cap)
        self.acc = np.zeros(cap)
        self.vlen = np.full(cap, self.cfg.vehicle_length)
        self.leg = np.zeros(cap, dtype=np.int64)
        self.leader = np.full(cap, -1, dtype=np.int64)
        self.follower = np.full(cap, -1, dtype=np.int64)
        self.assigned = np.full(cap, np.nan)
        self.granted = np.zeros(cap, dtype=np.bool_)
        self.latch = np.zeros(cap, dtype=np.int64)
        self.sstate = np.zeros(cap, dtype=np.bool_)
        self.nstops = np.zeros(cap, dtype=np.int64)
        self.stime = np.zeros(cap)
        self.fuel = np.zeros(cap)
        self.sig_ctx = np.full(cap, -1, dtype=np.int64)
        self.t_inject = np.full(cap, np.nan)
        self.t_done = np.full(cap, np.nan)
        self.t_arrival = np.full(cap, np.nan)
        self.ev_asg = np.full((cap, nl), np.nan)
        self.ev_acc = np.full((cap, nl), np.nan)
        self.ev_ent = np.full((cap, nl), np.nan)
        self.ev_ext = np.full((cap, nl), np.nan)

    # --- injection -----------------------------------------------------
    def _spawn(self, t: float):
        cfg = self.cfg
        d = cfg.driver
        for c in range(len(self.arrivals)):
            ptr = self._ptr[c]
            arr = self.arrivals[c]
            if ptr >= len(arr) or arr[ptr] > t + 1e-9:
                continue
            tail = self._tail[c]
            v0 = cfg.v_avg
            if tail >= 0 and np.isnan(self.t_done[tail]):
                gap = self.pos[tail] - self.vlen[tail]
                if gap < d.min_gap + 1.0:
                    continue
                v0 = min(v0, float(K.safe_speed(gap - d.min_gap, self.vel[tail], cfg.a_max, d.time_headway)))
            i = self.n
            self.n += 1
            self.corr[i] = c
            self.vel[i] = v0
            self.t_inject[i] = t
            self.t_arrival[i] = arr[ptr]
            if tail >= 0 and np.isnan(self.t_done[tail]):
                self.leader[i] = tail
                self.follower[tail] = i
            self._tail[c] = i
            self._ptr[c] = ptr + 1
            self._active.append(i)
            self._dirty = True
            if self.coordinator is not None and self.coordinator.transcript.enabled:
                ident = self.topo.corridors[c].intersections[0]
                self.coordinator.notify(MessageKind.SUBSCRIBE, t, i, ident)

    # --- control rounds ------------------------------------------------
    def _subscribers(self, t: float) -> Dict[int, List[Vehicle]]:
        topo = self.topo
        dacc = self.geometry.d_access
        vmax = self.cfg.v_max
        subs: Dict[int, List[Vehicle]] = {i: [] for i in topo.intersections}
        for i in self._active:
            c = int(self.corr[i])
            k = int(self.leg[i])
            cor = topo.corridors[c]
            if k >= len(cor.intersections):
                continue
            ident = cor.intersections[k]
            ap = cor.stop_bars[k] - dacc
            v = min(max(float(self.vel[i]), 0.0), vmax)
            if self.pos[i] >= ap:
                veh = Vehicle(i, ident, cor.movement, cor.phase, 0.0, v,
                              t_access_assigned=float(self.ev_acc[i, k]), inside_access_area=True,
                              length=float(self.vlen[i]))
            else:
                asg = self.assigned[i]
                d = float(ap - self.pos[i])
                # the tracking law brings vehicles to the access point at up to v_avg
                v_acc = min(self.cfg.v_avg, float(np.sqrt(v * v + 2.0 * self.cfg.a_max * d)))
                veh = Vehicle(i, ident, cor.movement, cor.phase, d, v,
                              t_access_assigned=None if np.isnan(asg) else float(asg),
                              length=float(self.vlen[i]), access_velocity=v_acc)
            subs[ident].append(veh)
        return subs

    def _control_round(self, t: float):
        co = self.coordinator
        subs = self._subscribers(t)
        co.set_subscribers(subs)
        total = 0.0
        worst = 0.0
        nodes = 0
        fails = 0
        out = None
        for _ in range(self.cfg.iterations_per_round):
            out = co.step(t)
        where = {v.id: (ident, v.inside_access_area) for ident, vs in subs.items() for v in vs}
        for ident, o in out.nodes.items():
            if o.result is not None:
                total += o.result.solve_wall_time
                worst = max(worst, o.result.solve_wall_time)
                nodes += o.result.nodes
            if not o.ok:
                fails += 1
            handed = set(o.handoff_vehicles)
            for vid, ta in o.assignments.items():
                if vid in handed:
                    self._provisional[(vid, ident)] = ta
                    continue
                home, inside = where.get(vid, (None, True))
                if home == ident and not inside:
                    self.assigned[vid] = ta
        n_veh = sum(len(v) for v in subs.values())
        self.rounds.append(RoundStats(co.round - 1, t, n_veh, total, worst, nodes, fails))
        if self.round_hook is not None:
            self.round_hook(self, t, subs, out)

    # --- main loop -----------------------------------------------------
    def run(self, until_round: Optional[int] = None) -> SimResult:
        """Run to the configured duration, or stop just before control round ``until_round``."""
        cfg = self.cfg
        start = time.perf_counter()
        self._ptr = [0] * len(self.arrivals)
        self._tail = [-1] * len(self.arrivals)
        self._active: List[int] = []
        self._dirty = True
        self._provisional: Dict[tuple, float] = {}
        self.rounds: List[RoundStats] = []
        n_int = len(self.topo.intersections)
        box_phase = np.full(n_int, -1, dtype=np.int64)
        box_count = np.zeros(n_int, dtype=np.int64)
        lane_q = np.zeros(self.c_bar.shape, dtype=np.int64)
        int_q = np.zeros((n_int, 2), dtype=np.int64)
        store = TrajectoryStore()
        q_time, q_vals = [], []
        idx = np.zeros(0, dtype=np.int64)
        ev_cap = 0
        spr, sps = cfg.steps_per_round, cfg.steps_per_sample
        milp = self.coordinator is not None

        for s in range(cfg.n_steps):
            t = s * cfg.dt
            self._spawn(t)
            if milp and s % spr == 0:
                if until_round is not None and s // spr >= until_round:
                    self.t_stop = t
                    break
                self._control_round(t)
            if self._dirty:
                idx = np.array(self._active, dtype=np.int64)
                self._dirty = False
                need = 8 * len(idx) + n_int + 16
                if need > ev_cap:
                    ev_cap = 2 * need
                    ev_veh = np.zeros(ev_cap, dtype=np.int64)
                    ev_kind = np.zeros(ev_cap, dtype=np.int64)
                    ev_leg = np.zeros(ev_cap, dtype=np.int64)
                    ev_time = np.zeros(ev_cap)
            sample = s % sps == 0
            if sample and len(idx):
                x_s, v_s = self.pos[idx].copy(), self.vel[idx].copy()
            nev = K.step(t, idx, self.P, self.testbed, self.fixed_time,
                         self.corr, self.pos, self.vel, self.acc, self.vlen, self.leg, self.leader,
                         self.assigned, self.granted, self.latch, self.sstate, self.nstops, self.stime,
                         self.fuel, self.sig_ctx, self.c_nlegs, self.c_bar, self.c_int, self.c_phase,
                         self.c_len, self.plan_table, box_phase, box_count, lane_q, int_q,
                         ev_veh, ev_kind, ev_leg, ev_time)
            if sample:
                q_time.append(t)
                q_vals.append(int_q.copy())
                if len(idx):
                    legs = np.minimum(self.leg[idx], self.c_nlegs[self.corr[idx]])
                    store.append(idx, t, x_s, v_s, self.acc[idx],
                                 self.link_index[self.corr[idx], legs], self.sig_ctx[idx],
                                 self.assigned[idx])
            if nev:
                self._events(t, ev_veh[:nev], ev_kind[:nev], ev_leg[:nev], ev_time[:nev])

        self.wall_time = time.perf_counter() - start
        return self._result(store, np.array(q_time), np.array(q_vals).reshape(-1, n_int, 2))

    def _events(self, t, veh, kind, leg, when):
        for i, k, lg, tm in zip(veh.tolist(), kind.tolist(), leg.tolist(), when.tolist()):
            if k == K.EV_ACCESS:
                self.ev_acc[i, lg] = tm
                self.ev_asg[i, lg] = self.assigned[i]
            elif k == K.EV_ENTER:
                self.ev_ent[i, lg] = tm
            elif k == K.EV_EXIT:
                self.ev_ext[i, lg] = tm
                self._switch(i, lg, tm)
            elif k == K.EV_DONE:
                self.t_done[i] = tm
                self._active.remove(i)
                self._dirty = True
                f = self.follower[i]
                if f >= 0:
                    self.leader[f] = -1
                if self._tail[self.corr[i]] == i:
                    self._tail[self.corr[i]] = -1
            else:
                self._violation(i, k, lg, tm)

    def _switch(self, i: int, lg: int, tm: float):
        """Rear cleared intersection ``lg``: subscribe to the next one."""
        cor = self.topo.corridors[self.corr[i]]
        self.assigned[i] = np.nan
        co = self.coordinator
        if co is None:
            return
        nxt = cor.intersections[lg + 1] if lg + 1 < len(cor.intersections) else None
        prov = self._provisional.pop((i, nxt), None) if nxt is not None else None
        if prov is not None:
            self.assigned[i] = prov
        for key in [k for k in self._provisional if k[0] == i]:
            del self._provisional[key]
        if co.transcript.enabled:
            co.notify(MessageKind.UNSUBSCRIBE, tm, i, cor.intersections[lg])
            if nxt is not None:
                co.notify(MessageKind.SUBSCRIBE, tm, i, nxt)

    def _violation(self, i, kind, lg, tm):
        names = {K.EV_RED: "red_light", K.EV_REAR: "rear_end", K.EV_BOX: "box_conflict"}
        if kind == K.EV_BOX:
            details = {"kind": names[kind], "intersection": self.topo.intersections[i], "time": tm}
        else:
            details = {"kind": names[kind], "vehicle": int(i), "time": tm,
                       "position": float(self.pos[i]), "velocity": float(self.vel[i])}
            if kind == K.EV_REAR:
                details["leader"] = int(lg)
        raise InvariantViolation(f"{names[kind]} at t={tm:.2f}", details)

    def _result(self, store, q_time, q_vals) -> SimResult:
        n = self.n
        topo = self.topo
        vehicles = {
            "id": np.arange(n),
            "corridor": self.corr[:n].copy(),
            "t_arrival": self.t_arrival[:n].copy(),
            "t_inject": self.t_inject[:n].copy(),
            "t_done": self.t_done[:n].copy(),
            "stops": self.nstops[:n].copy(),
            "stop_time": self.stime[:n].copy(),
            "fuel_g": self.fuel[:n].copy(),
            "distance": np.where(np.isnan(self.t_done[:n]), self.pos[:n], self.c_len[self.corr[:n]]),
        }
        rows = []
        for i in range(n):
            cor = topo.corridors[self.corr[i]]
            for k, ident in enumerate(cor.intersections):
                if np.isnan(self.ev_ent[i, k]) and np.isnan(self.ev_acc[i, k]):
                    continue
                rows.append((i, ident, k, self.ev_asg[i, k], self.ev_acc[i, k],
                             self.ev_ent[i, k], self.ev_ext[i, k]))
        cols = ["vehicle", "intersection", "leg", "t_access_assigned", "t_access", "t_enter", "t_exit"]
        arr = np.array(rows, dtype=float).reshape(-1, len(cols))
        events = {name: arr[:, j] for j, name in enumerate(cols)}
        for name in ("vehicle", "intersection", "leg"):
            events[name] = events[name].astype(np.int64)
        store.link_names = self.link_names
        return SimResult(self.cfg, vehicles, events, store.finalize(), q_time, q_vals, self.rounds,
                         self.coordinator, self.plans, self.wall_time)


def run_simulation(config: SimConfig, round_hook: Optional[Callable] = None) -> SimResult:
    """Run one configured simulation to its duration."""
    return Simulation(config, round_hook).run()
