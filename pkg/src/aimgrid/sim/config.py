"""Simulation configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

from ..metrics import FuelModelParams
from ..scheduler import V_AVG, V_MAX, SchedulerParams
from ..topology import GridTopology

TESTBEDS = ("A", "B", "C", "D")

# injection rates (veh/h) per entry link, in GridTopology.grid's entry order
GRID_RATES = [550.0, 300.0, 600.0, 950.0, 550.0, 200.0, 750.0, 900.0, 400.0, 450.0, 750.0, 550.0]


@dataclass
class SignalSettings:
    saturation_flow: float = 1800.0  # veh/h per lane
    lost_time: float = 4.0           # s per phase
    yellow: float = 5.0               # 1 s reaction + v_avg / (2 a_max), rounded up
    all_red: float = 1.0
    min_cycle: float = 30.0
    max_cycle: float = 150.0


@dataclass
class DriverSettings:
    """Longitudinal behavior shared by all testbeds."""

    min_gap: float = 2.0          # m, standstill bumper gap
    time_headway: float = 1.0     # s, car-following envelope
    tracking_gain: float = 0.5    # 1/s, target-speed proportional law
    stop_margin: float = 0.5      # m short of the stop bar when holding
    detection_range: float = 300.0   # testbed A: signal visible within this range
    advisory_range: float = 400.0    # testbed B: timing communicated within this range
    queue_info_range: float = 300.0  # testbed B: queue size known within this range
    discharge_headway: float = 2.0   # s per queued vehicle
    advisory_margin: float = 0.5     # s after the predicted entry instant
    advisory_min_speed: float = 8.0  # m/s, slower advisories are not issued
    arrival_min_speed: float = 8.0   # m/s, slower approaches to an access time end in a burst to v_avg
    interlock_lookahead: float = 1.0  # s of travel added to braking distance before asking for the box


@dataclass
class SimConfig:
    topology: GridTopology
    testbed: str = "D"
    duration: float = 3600.0
    dt: float = 0.1
    control_period: float = 6.0
    v_max: float = V_MAX
    v_avg: float = V_AVG
    a_max: float = 2.0
    vehicle_length: float = 5.0
    injection_rates: List[float] = field(default_factory=lambda: list(GRID_RATES))
    min_spawn_headway: float = 1.5
    seed: int = 0
    scheduler: SchedulerParams = field(default_factory=SchedulerParams)
    signals: SignalSettings = field(default_factory=SignalSettings)
    fuel: FuelModelParams = field(default_factory=FuelModelParams)
    driver: DriverSettings = field(default_factory=DriverSettings)
    iterations_per_round: int = 1
    sample_period: float = 1.0    # trajectory store resolution
    queue_speed: float = 2.0
    queue_range: float = 150.0
    transcript: bool = False
    stop_low: float = 0.5
    stop_high: float = 1.0

    def __post_init__(self):
        if self.testbed not in TESTBEDS:
            raise ValueError(f"testbed must be one of {TESTBEDS}")
        if self.duration <= 0 or self.dt <= 0:
            raise ValueError("duration and dt must be positive")
        if not _divides(self.dt, self.control_period):
            raise ValueError("dt must divide the control period")
        if not _divides(self.dt, self.sample_period):
            raise ValueError("dt must divide the sample period")
        if len(self.injection_rates) != len(self.topology.entry_links):
            raise ValueError(f"need {len(self.topology.entry_links)} injection rates, "
                             f"got {len(self.injection_rates)}")
        if any(r < 0 for r in self.injection_rates):
            raise ValueError("injection rates must be nonnegative")
        if not 0 < self.v_avg <= self.v_max:
            raise ValueError("need 0 < v_avg <= v_max")
        if self.iterations_per_round < 1:
            raise ValueError("iterations_per_round must be at least 1")

    @property
    def steps_per_round(self) -> int:
        return int(round(self.control_period / self.dt))

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_period / self.dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def _divides(dt: float, period: float) -> bool:
    k = period / dt
    return k >= 1 and math.isclose(k, round(k), rel_tol=0, abs_tol=1e-9)


# node cap per intersection solve in grid runs; the greedy incumbent is kept on the cap
GRID_MAX_NODES = 20


def grid_config(testbed: str = "D", seed: int = 0, **kw) -> SimConfig:
    """The 3x3 grid with 400 m links at the default rates."""
    kw.setdefault("scheduler", SchedulerParams(max_nodes=GRID_MAX_NODES))
    return SimConfig(GridTopology.grid(3, 3, 400.0), testbed=testbed, seed=seed, **kw)
