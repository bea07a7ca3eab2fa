"""One scheduling node per intersection, run in lock-step control rounds.

In a round every node solves its own MILP. In coordinated mode a node also
tells each downstream neighbor which of its subscribers are heading there
and when they should be expected; the neighbor folds those vehicles into
its next solve as soft desired times. Messages posted during round ``r``
sit in the mailbox until the barrier that closes the round, so they can
only influence round ``r + 1``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

from .milp import SolverOptions, Status
from .scheduler import (ScheduleInfeasible, ScheduleResult, SchedulerParams, Vehicle,
                        solve_schedule, sort_vehicles)
from .topology import MOVEMENT_PHASE, GridTopology


class CoordinationMode(enum.Enum):
    UNCOORDINATED = "uncoordinated"
    COORDINATED = "coordinated"


class MessageKind(enum.Enum):
    SUBSCRIBE = "subscribe"
    UNSUBSCRIBE = "unsubscribe"
    ACCESS_ASSIGNMENT = "access_assignment"
    NEIGHBOR_HANDOFF = "neighbor_handoff"


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    round: int
    time: float
    sender: Hashable
    receiver: Hashable
    payload: dict

    def record(self) -> dict:
        return {"round": self.round, "time": self.time, "sender": self.sender,
                "receiver": self.receiver, "kind": self.kind.value, "payload": self.payload}


@dataclass(frozen=True)
class HandoffEntry:
    """Upstream view of a vehicle expected at a neighbor."""

    vehicle: Hashable
    origin: int
    route: tuple
    movement: str
    t_desired: float
    t_min: float
    distance: float
    velocity: float
    length: float

    def payload(self) -> dict:
        return {"vehicle": self.vehicle, "origin": self.origin, "route": list(self.route),
                "movement": self.movement, "t_desired": self.t_desired, "t_min": self.t_min,
                "distance": self.distance, "velocity": self.velocity, "length": self.length}


def handoff_desired_time(t_access_at_k: float, link_travel_time: float) -> float:
    """Desired access time at the next intersection: upstream access time plus travel time."""
    if link_travel_time <= 0:
        raise ValueError("link travel time must be positive")
    return t_access_at_k + link_travel_time


def route_vehicle_next_hop(topology: GridTopology, vehicle: Vehicle) -> Optional[int]:
    """Next intersection after ``vehicle.intersection`` (None means the boundary sink)."""
    return topology.next_hop(vehicle.intersection, vehicle.movement)


class Mailbox:
    """Round-buffered message exchange. ``post`` queues; ``barrier`` delivers."""

    def __init__(self):
        self._outbox: List[ControlMessage] = []
        self._inbox: Dict[Hashable, List[ControlMessage]] = {}

    def post(self, msg: ControlMessage) -> None:
        self._outbox.append(msg)

    def barrier(self) -> None:
        self._inbox = {}
        for msg in self._outbox:
            self._inbox.setdefault(msg.receiver, []).append(msg)
        self._outbox = []

    def inbox(self, receiver: Hashable) -> List[ControlMessage]:
        return list(self._inbox.get(receiver, ()))


class Transcript:
    """Append-only message log, written as one JSON object per line."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: List[dict] = []

    def log(self, msg: ControlMessage) -> None:
        if self.enabled:
            self.records.append(msg.record())

    def lines(self) -> Iterable[str]:
        for rec in self.records:
            yield json.dumps(rec, sort_keys=True, default=str)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")


@dataclass
class NodeState:
    intersection: int
    subscribers: List[Vehicle] = field(default_factory=list)
    pending_handoffs: List[HandoffEntry] = field(default_factory=list)
    last_result: Optional[ScheduleResult] = None
    last_feasible: Dict[Hashable, float] = field(default_factory=dict)


@dataclass
class NodeOutcome:
    intersection: int
    assignments: Dict[Hashable, float]
    result: Optional[ScheduleResult] = None
    error: Optional[str] = None
    conflicts: list = field(default_factory=list)
    handoff_vehicles: tuple = ()

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RoundOutcome:
    round: int
    time: float
    nodes: Dict[int, NodeOutcome]
    messages: List[ControlMessage]


def _handoff_vehicle(entry: HandoffEntry, intersection: int) -> Vehicle:
    return Vehicle(entry.vehicle, intersection, entry.movement, MOVEMENT_PHASE[entry.movement],
                   entry.distance, entry.velocity, t_access_desired=entry.t_desired,
                   length=entry.length, t_access_min=entry.t_min, handoff=True)


def node_vehicles(node: NodeState, mode: CoordinationMode,
                  mailbox: Mailbox) -> Tuple[List[Vehicle], List[HandoffEntry]]:
    """Vehicles a node schedules this round: its subscribers plus delivered handoffs."""
    entries: List[HandoffEntry] = []
    if CoordinationMode(mode) is CoordinationMode.COORDINATED:
        entries = [HandoffEntry(**{k: (tuple(v) if k == "route" else v) for k, v in m.payload.items()})
                   for m in mailbox.inbox(node.intersection) if m.kind is MessageKind.NEIGHBOR_HANDOFF]
    own = {v.id for v in node.subscribers}
    entries = [e for e in entries if e.vehicle not in own]
    return list(node.subscribers) + [_handoff_vehicle(e, node.intersection) for e in entries], entries


def control_round(nodes: Dict[int, NodeState], mode: CoordinationMode, now: float,
                  topology: GridTopology, params: SchedulerParams, mailbox: Mailbox,
                  round_index: int, transcript: Optional[Transcript] = None,
                  options: Optional[SolverOptions] = None) -> RoundOutcome:
    """Solve every node once, emit messages, then close the round.

    Each node sees its primary subscribers plus, when coordinated, the
    handoff entries delivered at the previous barrier (skipping vehicles it
    already has as subscribers). A failed solve keeps the node's previous
    feasible assignments for the vehicles that still have one.
    """
    mode = CoordinationMode(mode)
    transcript = transcript or Transcript(enabled=False)
    outcomes: Dict[int, NodeOutcome] = {}
    messages: List[ControlMessage] = []

    def send(msg, deliver=True):
        if deliver:
            mailbox.post(msg)
        transcript.log(msg)
        messages.append(msg)

    for ident in sorted(nodes):
        node = nodes[ident]
        vehicles, entries = node_vehicles(node, mode, mailbox)
        node.pending_handoffs = entries
        if not vehicles:
            outcomes[ident] = NodeOutcome(ident, {})
            continue
        try:
            res = solve_schedule(vehicles, params, now, options)
            if res.solve_status not in (Status.OPTIMAL, Status.ITERATION_LIMIT):
                raise ScheduleInfeasible(res.solve_status.value, [])
        except ScheduleInfeasible as exc:
            kept = {v.id: node.last_feasible[v.id] for v in node.subscribers if v.id in node.last_feasible}
            outcomes[ident] = NodeOutcome(ident, kept, None, str(exc), exc.conflicts)
            continue
        node.last_result = res
        node.last_feasible = dict(res.assignments)
        outcomes[ident] = NodeOutcome(ident, dict(res.assignments), res,
                                      handoff_vehicles=tuple(e.vehicle for e in entries))
        for veh in sort_vehicles(vehicles):
            # assignments go to vehicles, not to nodes: logged but not queued
            send(ControlMessage(MessageKind.ACCESS_ASSIGNMENT, round_index, now, ident,
                                f"vehicle:{veh.id}",
                                {"vehicle": veh.id, "t_access": res.assignments[veh.id],
                                 "t_desired": res.t_desired[veh.id], "handoff": veh.handoff}),
                 deliver=False)

        if mode is not CoordinationMode.COORDINATED:
            continue
        for veh in sort_vehicles(node.subscribers):
            nxt = topology.next_hop(ident, veh.movement)
            if nxt is None:
                continue
            length = topology.link_from(ident, veh.movement).length
            t_k = res.assignments[veh.id]
            route = [nxt]
            hop = nxt
            while (hop := topology.next_hop(hop, veh.movement)) is not None:
                route.append(hop)
            entry = HandoffEntry(
                veh.id, ident, tuple(route), veh.movement,
                handoff_desired_time(t_k, length / params.v_avg),
                t_k + length / params.v_max,
                max(veh.distance_to_access, 0.0) + length, veh.velocity, veh.length)
            send(ControlMessage(MessageKind.NEIGHBOR_HANDOFF, round_index, now, ident, nxt,
                                entry.payload()))

    mailbox.barrier()
    return RoundOutcome(round_index, now, outcomes, messages)


class Coordinator:
    """Holds node states, the mailbox and the transcript across rounds."""

    def __init__(self, topology: GridTopology, params: SchedulerParams,
                 mode: CoordinationMode = CoordinationMode.COORDINATED,
                 transcript: bool = False, options: Optional[SolverOptions] = None):
        self.topology = topology
        self.params = params
        self.mode = CoordinationMode(mode)
        self.nodes = {i: NodeState(i) for i in topology.intersections}
        self.mailbox = Mailbox()
        self.transcript = Transcript(transcript)
        self.options = options
        self.round = 0

    def set_subscribers(self, subscribers: Dict[int, Sequence[Vehicle]]) -> None:
        for ident, node in self.nodes.items():
            node.subscribers = list(subscribers.get(ident, ()))

    def notify(self, kind: MessageKind, now: float, vehicle: Hashable, intersection: int,
               payload: Optional[dict] = None) -> None:
        """Log a vehicle-originated subscribe/unsubscribe message."""
        msg = ControlMessage(kind, self.round, now, f"vehicle:{vehicle}", intersection,
                             payload or {"vehicle": vehicle})
        self.transcript.log(msg)

    def step(self, now: float) -> RoundOutcome:
        out = control_round(self.nodes, self.mode, now, self.topology, self.params, self.mailbox,
                            self.round, self.transcript, self.options)
        self.round += 1
        return out
