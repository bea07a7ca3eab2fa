"""Road network: intersections joined by straight single-lane links.

Every movement goes straight through (no turns), so a vehicle's route is
fixed by its entry link: it follows one corridor across the network to a
boundary sink. Intersections have two phases; east-west movements form
phase ``O`` and north-south movements form phase ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .scheduler import IntersectionGeometry

MOVEMENT_PHASE = {"EB": "O", "WB": "O", "NB": "X", "SB": "X"}
PHASES = ("O", "X")
# (row, col) step per movement; row 0 is the northern edge
_STEP = {"EB": (0, 1), "WB": (0, -1), "NB": (-1, 0), "SB": (1, 0)}


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    """Directed link; ``None`` endpoints are boundary sources and sinks."""

    source: Optional[int]
    target: Optional[int]
    length: float
    movement: str

    @property
    def phase(self) -> Optional[str]:
        """Phase of the movement at the target intersection (None for sinks)."""
        return None if self.target is None else MOVEMENT_PHASE[self.movement]

    @property
    def name(self) -> str:
        src = "in" if self.source is None else f"I{self.source}"
        dst = "out" if self.target is None else f"I{self.target}"
        return f"{self.movement}:{src}-{dst}"


@dataclass(frozen=True)
class Corridor:
    """One entry-to-sink route laid out along a single coordinate.

    ``stop_bars[k]`` is the position of the stop bar of ``intersections[k]``
    measured from the entry point.
    """

    index: int
    movement: str
    intersections: Tuple[int, ...]
    stop_bars: Tuple[float, ...]
    length: float

    @property
    def phase(self) -> str:
        return MOVEMENT_PHASE[self.movement]


class GridTopology:
    def __init__(self, intersections: Sequence[int], links: Sequence[Link],
                 geometry: Optional[IntersectionGeometry] = None,
                 entry_order: Optional[Sequence[Link]] = None):
        self.intersections = list(intersections)
        self.links = list(links)
        self.geometry = geometry or IntersectionGeometry.from_speeds()
        self._validate()
        self._out: Dict[Tuple[int, str], Link] = {
            (l.source, l.movement): l for l in self.links if l.source is not None}
        self._in: Dict[Tuple[int, str], Link] = {
            (l.target, l.movement): l for l in self.links if l.target is not None}
        entries = [l for l in self.links if l.source is None]
        self.entry_links = list(entry_order) if entry_order is not None else entries
        nb: Dict[int, set] = {i: set() for i in self.intersections}
        for l in self.links:
            if l.source is not None and l.target is not None:
                nb[l.source].add(l.target)
                nb[l.target].add(l.source)
        self.neighbors = {i: tuple(sorted(v)) for i, v in nb.items()}
        self.corridors = [self._corridor(k, l) for k, l in enumerate(self.entry_links)]

    def _validate(self):
        ids = set(self.intersections)
        if len(ids) != len(self.intersections):
            raise TopologyError("duplicate intersection ids")
        seen = set()
        for l in self.links:
            if l.length <= 0:
                raise TopologyError(f"link {l.name} has nonpositive length")
            if l.movement not in MOVEMENT_PHASE:
                raise TopologyError(f"unknown movement {l.movement!r}")
            for end in (l.source, l.target):
                if end is not None and end not in ids:
                    raise TopologyError(f"link {l.name} references unknown intersection {end}")
            key = (l.source, l.target, l.movement)
            if key in seen:
                raise TopologyError(f"duplicate link {l.name}")
            seen.add(key)
        outgoing = {(l.source, l.movement) for l in self.links if l.source is not None}
        for l in self.links:
            if l.target is not None and (l.target, l.movement) not in outgoing:
                raise TopologyError(f"link {l.name} dead-ends at intersection {l.target}")

    def _corridor(self, index: int, entry: Link) -> Corridor:
        inters, bars = [], []
        pos, link = 0.0, entry
        while link.target is not None:
            pos += link.length
            inters.append(link.target)
            bars.append(pos)
            link = self._out[(link.target, link.movement)]
            if len(inters) > len(self.intersections):
                raise TopologyError("route does not terminate")
        return Corridor(index, entry.movement, tuple(inters), tuple(bars), pos + link.length)

    def next_hop(self, intersection: int, movement: str) -> Optional[int]:
        """Intersection reached after crossing ``intersection`` on ``movement`` (None = sink)."""
        try:
            return self._out[(intersection, movement)].target
        except KeyError:
            raise TopologyError(f"no {movement} link leaves intersection {intersection}") from None

    def link_from(self, intersection: int, movement: str) -> Link:
        return self._out[(intersection, movement)]

    def link_into(self, intersection: int, movement: str) -> Link:
        return self._in[(intersection, movement)]

    def route(self, entry: Link) -> Tuple[int, ...]:
        return self._corridor(0, entry).intersections

    @classmethod
    def grid(cls, rows: int = 3, cols: int = 3, link_length: float = 400.0,
             geometry: Optional[IntersectionGeometry] = None) -> "GridTopology":
        """Rectangular grid, intersections numbered row-major from 1 (north-west).

        Entry links are ordered corridor by corridor: for k = 0, 1, ...
        column k southbound and northbound, then row k eastbound and
        westbound.
        """
        def ident(r, c):
            return r * cols + c + 1

        inside = lambda r, c: 0 <= r < rows and 0 <= c < cols
        links = []
        for r in range(rows):
            for c in range(cols):
                for mv, (dr, dc) in _STEP.items():
                    pr, pc = r - dr, c - dc
                    src = ident(pr, pc) if inside(pr, pc) else None
                    links.append(Link(src, ident(r, c), link_length, mv))
                    nr, nc = r + dr, c + dc
                    if not inside(nr, nc):
                        links.append(Link(ident(r, c), None, link_length, mv))
        by_key = {(l.source, l.target, l.movement): l for l in links}
        order = []
        for k in range(max(rows, cols)):
            if k < cols:
                order.append(by_key[(None, ident(0, k), "SB")])
                order.append(by_key[(None, ident(rows - 1, k), "NB")])
            if k < rows:
                order.append(by_key[(None, ident(k, 0), "EB")])
                order.append(by_key[(None, ident(k, cols - 1), "WB")])
        return cls([ident(r, c) for r in range(rows) for c in range(cols)], links, geometry, order)

    @classmethod
    def line(cls, n: int = 2, spacing: float = 500.0, approach: float = 1500.0,
             geometry: Optional[IntersectionGeometry] = None) -> "GridTopology":
        """East-west chain of ``n`` intersections (numbered west to east) with
        single north-south crossings. Entry links are EB, WB, then each
        intersection's SB and NB."""
        links = []
        ids = list(range(1, n + 1))
        links.append(Link(None, 1, approach, "EB"))
        links.append(Link(None, n, approach, "WB"))
        for a, b in zip(ids, ids[1:]):
            links.append(Link(a, b, spacing, "EB"))
            links.append(Link(b, a, spacing, "WB"))
        links.append(Link(n, None, approach, "EB"))
        links.append(Link(1, None, approach, "WB"))
        for i in ids:
            for mv in ("SB", "NB"):
                links.append(Link(None, i, approach, mv))
                links.append(Link(i, None, approach, mv))
        entries = [links[0], links[1]] + [l for l in links if l.source is None and l.movement in ("SB", "NB")]
        return cls(ids, links, geometry, entries)


def describe(topology: GridTopology) -> List[str]:
    """One line per corridor, e.g. ``SB: I1 -> I4 -> I7``."""
    return [f"{c.movement}: " + " -> ".join(f"I{i}" for i in c.intersections)
            for c in topology.corridors]
