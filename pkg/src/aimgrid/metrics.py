"""Measures of effectiveness computed from a finished simulation.

The per-sample definitions here (stop hysteresis, fuel proxy) are the same
ones the simulation kernel accumulates online, so a report built from the
online counters agrees with one rebuilt from a full-resolution trajectory.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

METERS_PER_MILE = 1609.344
LITERS_PER_GALLON = 3.785411784

STOP_LOW = 0.5    # m/s, a stop begins below this
STOP_HIGH = 1.0   # m/s, and ends above this


@dataclass
class FuelModelParams:
    """Tractive-power fuel proxy for a midsize sedan."""

    mass: float = 1500.0          # kg
    drag_area: float = 0.68       # Cd * A, m^2
    air_density: float = 1.2      # kg/m^3
    rolling: float = 0.009        # rolling resistance coefficient
    idle_rate: float = 0.15       # g/s
    fuel_per_energy: float = 7.0e-5  # g/J
    fuel_density: float = 745.0   # g/L
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("mass", "drag_area", "air_density", "rolling", "idle_rate",
                     "fuel_per_energy", "fuel_density", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"fuel parameter {name} must be positive")


@dataclass
class StopSummary:
    count: int
    stopped_time: float


def count_stops(velocity, dt: float, low: float = STOP_LOW, high: float = STOP_HIGH) -> StopSummary:
    """Stops in a uniformly sampled speed series.

    A stop starts when the speed drops below ``low`` and only ends once it
    climbs above ``high``. Stopped time is the time spent below ``low``.
    """
    v = np.asarray(velocity, dtype=float)
    below = v < low
    count = 0
    stopped = False
    for slow, fast in zip(below.tolist(), (v > high).tolist()):
        if stopped:
            if fast:
                stopped = False
        elif slow:
            stopped = True
            count += 1
    return StopSummary(count, float(np.count_nonzero(below)) * dt)


def fuel_rate(velocity, acceleration, params: Optional[FuelModelParams] = None):
    """Fuel flow in g/s; no recuperation while braking."""
    p = params or FuelModelParams()
    v = np.asarray(velocity, dtype=float)
    a = np.asarray(acceleration, dtype=float)
    force = p.mass * a + 0.5 * p.air_density * p.drag_area * v * v + p.rolling * p.mass * p.gravity
    return p.idle_rate + p.fuel_per_energy * np.maximum(force * v, 0.0)


def trip_mpg(fuel_grams, distance_m, params: Optional[FuelModelParams] = None):
    p = params or FuelModelParams()
    gallons = np.asarray(fuel_grams, dtype=float) / p.fuel_density / LITERS_PER_GALLON
    return np.asarray(distance_m, dtype=float) / METERS_PER_MILE / gallons


def fit_lognormal(samples) -> Tuple[float, float]:
    """Maximum-likelihood lognormal fit, returned as (mu, sigma) of the log."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    if np.any(~(x > 0)):
        raise ValueError("lognormal fit needs strictly positive samples")
    logs = np.log(x)
    return float(logs.mean()), float(logs.std())


def queue_length(snapshot: Dict[str, np.ndarray], topology, intersection, phase: str,
                 speed: float = 2.0, reach: float = 150.0) -> int:
    """Vehicles slower than ``speed`` within ``reach`` upstream of the phase's stop bars.

    ``snapshot`` holds equal-length ``corridor``, ``position`` and ``velocity``
    arrays (position measured along the corridor from its entry).
    """
    corr = np.asarray(snapshot["corridor"])
    pos = np.asarray(snapshot["position"], dtype=float)
    vel = np.asarray(snapshot["velocity"], dtype=float)
    total = 0
    for cor in topology.corridors:
        if cor.phase != phase or intersection not in cor.intersections:
            continue
        bar = cor.stop_bars[cor.intersections.index(intersection)]
        on = corr == cor.index
        d = bar - pos[on]
        total += int(np.count_nonzero((d >= 0) & (d <= reach) & (vel[on] < speed)))
    return total


HIST_EDGES = np.arange(0.0, 22.5, 0.5)

SUMMARY_FIELDS = (
    "intersection_traversals", "completed_vehicles", "injected_vehicles", "in_network_vehicles",
    "total_stops", "avg_stop_time_per_vehicle", "avg_stop_time_per_stop",
    "avg_travel_time_per_vehicle", "avg_mpg_per_vehicle", "avg_velocity", "lognormal_mu",
    "lognormal_sigma",
)


@dataclass
class MetricsReport:
    intersection_traversals: int
    completed_vehicles: int
    injected_vehicles: int
    in_network_vehicles: int
    total_stops: int
    avg_stop_time_per_vehicle: float
    avg_stop_time_per_stop: float
    avg_travel_time_per_vehicle: float
    avg_mpg_per_vehicle: float
    avg_velocity: float
    lognormal_mu: float
    lognormal_sigma: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    queue_time: np.ndarray
    queue: np.ndarray                      # (samples, intersections, 2) per phase O, X
    intersections: List[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in SUMMARY_FIELDS}

    def mean_queue(self, intersection) -> float:
        """Queue averaged over time and the intersection's phases."""
        r = self.intersections.index(intersection)
        if len(self.queue) == 0:
            return 0.0
        return float(self.queue[:, r, :].mean())

    def to_dict(self) -> dict:
        q = self.queue
        return {
            "meta": self.meta,
            "summary": {k: _plain(v) for k, v in self.summary().items()},
            "histogram": {"edges": self.hist_edges.tolist(), "counts": self.hist_counts.tolist(),
                          "mu": self.lognormal_mu, "sigma": self.lognormal_sigma},
            "queue_mean": {str(ident): {"O": float(q[:, r, 0].mean()) if len(q) else 0.0,
                                        "X": float(q[:, r, 1].mean()) if len(q) else 0.0}
                           for r, ident in enumerate(self.intersections)},
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.summary().items():
            w.writerow([k, _fmt(v)])
        return buf.getvalue()

    def queue_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time"] + [f"I{ident}_{ph}" for ident in self.intersections for ph in "OX"])
        flat = self.queue.reshape(len(self.queue), -1)
        for t, row in zip(self.queue_time.tolist(), flat.tolist()):
            w.writerow([f"{t:.1f}"] + row)
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lo", "hi", "count", "lognormal_pdf"])
        e = self.hist_edges
        mid = 0.5 * (e[:-1] + e[1:])
        pdf = _lognormal_pdf(mid, self.lognormal_mu, self.lognormal_sigma)
        for lo, hi, c, p in zip(e[:-1].tolist(), e[1:].tolist(), self.hist_counts.tolist(), pdf.tolist()):
            w.writerow([f"{lo:g}", f"{hi:g}", c, f"{p:.6g}"])
        return buf.getvalue()

    def write(self, directory, prefix: str = "") -> None:
        import os
        os.makedirs(directory, exist_ok=True)
        self.to_json(os.path.join(directory, f"{prefix}report.json"))
        for name, text in (("summary", self.summary_csv()), ("queue", self.queue_csv()),
                           ("histogram", self.histogram_csv())):
            with open(os.path.join(directory, f"{prefix}{name}.csv"), "w") as fh:
                fh.write(text)


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _lognormal_pdf(x, mu, sigma):
    x = np.asarray(x, dtype=float)
    if not sigma > 0 or np.isnan(mu):
        return np.zeros_like(x)
    with np.errstate(divide="ignore"):
        z = (np.log(x) - mu) / sigma
    return np.exp(-0.5 * z * z) / (x * sigma * np.sqrt(2.0 * np.pi))


def _nanmean(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.mean()) if x.size else 0.0


def compute_report(result, fuel: Optional[FuelModelParams] = None, meta: Optional[dict] = None,
                   edges: Sequence[float] = HIST_EDGES) -> MetricsReport:
    """Build the report from a :class:`SimResult`.

    Per-vehicle averages run over completed vehicles only. Stops are totaled
    over every injected vehicle, including those still in the network.
    """
    fuel = fuel or result.config.fuel
    veh = result.vehicles
    done = ~np.isnan(veh["t_done"])
    travel = (veh["t_done"] - veh["t_inject"])[done]
    dist = veh["distance"][done]
    stops_done = veh["stops"][done]
    stime_done = veh["stop_time"][done]
    n_stops_done = int(stops_done.sum())
    mpg = trip_mpg(veh["fuel_g"][done], dist, fuel)
    velocity = dist / travel if travel.size else np.zeros(0)
    if velocity.size >= 2:
        mu, sigma = fit_lognormal(velocity)
    else:
        mu, sigma = float("nan"), float("nan")
    counts, hist_edges = np.histogram(velocity, bins=np.asarray(edges, dtype=float))
    ev = result.events
    traversals = int(np.count_nonzero(~np.isnan(ev["t_exit"]))) if len(ev["t_exit"]) else 0
    return MetricsReport(
        intersection_traversals=traversals,
        completed_vehicles=int(done.sum()),
        injected_vehicles=int(result.injected),
        in_network_vehicles=int(result.in_network),
        total_stops=int(veh["stops"].sum()),
        avg_stop_time_per_vehicle=_nanmean(stime_done),
        avg_stop_time_per_stop=float(stime_done.sum() / n_stops_done) if n_stops_done else 0.0,
        avg_travel_time_per_vehicle=_nanmean(travel),
        avg_mpg_per_vehicle=_nanmean(mpg),
        avg_velocity=_nanmean(velocity),
        lognormal_mu=mu,
        lognormal_sigma=sigma,
        hist_edges=hist_edges,
        hist_counts=counts.astype(np.int64),
        queue_time=np.asarray(result.queue_time, dtype=float),
        queue=np.asarray(result.queue, dtype=np.int64),
        intersections=list(result.config.topology.intersections),
        meta=dict(meta or {}),
    )


def recompute_from_store(store, dt: float, fuel: Optional[FuelModelParams] = None,
                         low: float = STOP_LOW, high: float = STOP_HIGH) -> Dict[str, np.ndarray]:
    """Per-vehicle stops, stopped time and fuel rebuilt from a trajectory store.

    Only exact when the store was sampled at every step.
    """
    d = store.data
    ids = np.unique(d["vehicle"])
    stops = np.zeros(len(ids), dtype=np.int64)
    stime = np.zeros(len(ids))
    grams = np.zeros(len(ids))
    for j, vid in enumerate(ids.tolist()):
        tr = store.vehicle(vid)
        s = count_stops(tr["velocity"], dt, low, high)
        stops[j], stime[j] = s.count, s.stopped_time
        grams[j] = float(np.sum(fuel_rate(tr["velocity"], tr["acceleration"], fuel)) * dt)
    return {"id": ids, "stops": stops, "stop_time": stime, "fuel_g": grams}
