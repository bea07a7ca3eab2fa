"""Fixed-time two-phase signal plans sized with Webster's method."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

GREEN, YELLOW, RED = 0, 1, 2


@dataclass(frozen=True)
class PhaseTiming:
    green: float   # displayed green
    yellow: float
    all_red: float

    @property
    def span(self) -> float:
        return self.green + self.yellow + self.all_red


@dataclass(frozen=True)
class SignalPlan:
    """One intersection's cycle: phase O first, then phase X.

    ``lost_time`` is the per-phase lost time used for sizing; effective
    green of a phase is ``span - lost_time``.
    """

    cycle: float
    phases: Mapping[str, PhaseTiming]
    offset: float = 0.0
    lost_time: float = 4.0
    order: tuple = ("O", "X")

    def __post_init__(self):
        total = sum(p.span for p in self.phases.values())
        if abs(total - self.cycle) > 1e-9:
            raise ValueError(f"phase spans sum to {total}, cycle is {self.cycle}")
        for p in self.phases.values():
            if min(p.green, p.yellow, p.all_red) <= 0:
                raise ValueError("signal intervals must be positive")
            if p.span <= self.lost_time:
                raise ValueError("phase shorter than its lost time")

    def effective_green(self, phase: str) -> float:
        return self.phases[phase].span - self.lost_time

    def start(self, phase: str) -> float:
        """Green onset of ``phase`` within the cycle."""
        t = 0.0
        for p in self.order:
            if p == phase:
                return t
            t += self.phases[p].span
        raise KeyError(phase)

    def state(self, phase: str, t: float) -> int:
        u = (t - self.offset - self.start(phase)) % self.cycle
        p = self.phases[phase]
        if u < p.green:
            return GREEN
        if u < p.green + p.yellow:
            return YELLOW
        return RED


def webster_plan(critical_flows: Mapping[str, float], saturation_flow: float = 1800.0,
                 lost_time: float = 4.0, yellow: float = 5.0, all_red: float = 1.0,
                 min_cycle: float = 30.0, max_cycle: float = 150.0,
                 min_green: float = 5.0) -> SignalPlan:
    """Webster optimum cycle ``(1.5 L + 5) / (1 - Y)`` with greens split by flow ratio.

    ``critical_flows`` maps phase to its critical lane flow (veh/h). Each
    phase's effective green is ``g = (C - L) y_i / Y`` and is displayed as
    ``g + lost_time - yellow - all_red`` of green.
    """
    phases = ("O", "X")
    y = {p: max(float(critical_flows.get(p, 0.0)), 0.0) / saturation_flow for p in phases}
    Y = sum(y.values())
    L = lost_time * len(phases)
    if Y >= 0.95:
        cycle = max_cycle
    else:
        cycle = min(max((1.5 * L + 5.0) / (1.0 - Y), min_cycle), max_cycle)
    shown_extra = lost_time - yellow - all_red
    if Y <= 0:
        shares = {p: 0.5 for p in phases}
    else:
        shares = {p: y[p] / Y for p in phases}
    greens = {p: max((cycle - L) * shares[p] + shown_extra, min_green) for p in phases}
    cycle = sum(g + yellow + all_red for g in greens.values())
    timings = {p: PhaseTiming(greens[p], yellow, all_red) for p in phases}
    return SignalPlan(cycle, timings, 0.0, lost_time)


def plan_arrays(plans: Mapping[int, SignalPlan], intersections) -> np.ndarray:
    """Pack plans as rows ``[cycle, offset, start_O, green_O, yellow_O, start_X, green_X, yellow_X]``."""
    out = np.zeros((len(intersections), 8))
    for row, ident in enumerate(intersections):
        pl = plans[ident]
        out[row, 0], out[row, 1] = pl.cycle, pl.offset
        for k, ph in enumerate(("O", "X")):
            out[row, 2 + 3 * k] = pl.start(ph)
            out[row, 3 + 3 * k] = pl.phases[ph].green
            out[row, 4 + 3 * k] = pl.phases[ph].yellow
    return out


def critical_flows(topology, rates: Mapping[int, float]) -> Dict[int, Dict[str, float]]:
    """Per intersection and phase, the largest single-lane demand crossing it.

    ``rates`` maps corridor index to its injection rate (veh/h); with no
    turns a corridor's flow reaches every intersection on it.
    """
    out = {i: {"O": 0.0, "X": 0.0} for i in topology.intersections}
    for cor in topology.corridors:
        q = float(rates.get(cor.index, 0.0))
        for ident in cor.intersections:
            out[ident][cor.phase] = max(out[ident][cor.phase], q)
    return out


def cycle_state(row, phase_index: int, t: float) -> int:
    """Signal state from a packed plan row (mirrors :meth:`SignalPlan.state`)."""
    cycle, offset = row[0], row[1]
    start, green, yellow = row[2 + 3 * phase_index], row[3 + 3 * phase_index], row[4 + 3 * phase_index]
    u = (t - offset - start) % cycle
    if u < green:
        return GREEN
    if u < green + yellow:
        return YELLOW
    return RED
