"""Kinematic microsimulation of a signalized or MILP-controlled road grid."""

from .config import (GRID_RATES, TESTBEDS, DriverSettings, FuelModelParams, SignalSettings, SimConfig,
                     grid_config)
from .engine import InvariantViolation, RoundStats, SimResult, Simulation, run_simulation
from .injection import arrival_times
from .signals import SignalPlan, webster_plan
from .store import TrajectoryStore

__all__ = [
    "GRID_RATES", "TESTBEDS", "DriverSettings", "FuelModelParams", "InvariantViolation", "RoundStats",
    "SignalPlan", "SignalSettings", "SimConfig", "SimResult", "Simulation", "TrajectoryStore",
    "arrival_times", "grid_config", "run_simulation", "webster_plan",
]
