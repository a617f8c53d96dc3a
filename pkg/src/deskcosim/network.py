"""Road graph: junctions, directed single-lane edges, and turn connections.

Edge geometry is the straight segment between its junctions. Longitudinal
positions measure the front bumper from the edge start; the declared edge
length is authoritative for driving, the geometric length only scales the
world-coordinate interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Junction:
    id: str
    x: float
    y: float
    tls_id: str | None = None


@dataclass(frozen=True)
class Connection:
    from_edge: str
    to_edge: str
    tls_id: str | None = None
    link_index: int = 0


@dataclass
class Edge:
    id: str
    from_junction: str
    to_junction: str
    length: float
    speed_limit: float
    # filled in by RoadNetwork from the junction coordinates
    start: tuple[float, float] = field(default=(0.0, 0.0))
    vec: tuple[float, float] = field(default=(1.0, 0.0))

    def point_at(self, lane_pos: float) -> tuple[float, float]:
        frac = lane_pos / self.length if self.length > 0 else 0.0
        return (
            self.start[0] + self.vec[0] * frac,
            self.start[1] + self.vec[1] * frac,
        )

    @property
    def heading_deg(self) -> float:
        """Navigational degrees: 0 points north, clockwise positive."""
        dx, dy = self.vec
        return math.degrees(math.atan2(dx, dy)) % 360.0


class RoadNetwork:
    def __init__(
        self,
        junctions: dict[str, Junction],
        edges: dict[str, Edge],
        connections: list[Connection],
    ):
        self.junctions = junctions
        self.edges = edges
        self.connections = {(c.from_edge, c.to_edge): c for c in connections}
        for edge in edges.values():
            a = junctions[edge.from_junction]
            b = junctions[edge.to_junction]
            edge.start = (a.x, a.y)
            # vec holds the full displacement; point_at scales by lane_pos/length
            edge.vec = (b.x - a.x, b.y - a.y)

    def connected(self, from_edge: str, to_edge: str) -> bool:
        return (from_edge, to_edge) in self.connections

    def connection(self, from_edge: str, to_edge: str) -> Connection | None:
        return self.connections.get((from_edge, to_edge))

    def heading_unit(self, edge_id: str) -> tuple[float, float]:
        dx, dy = self.edges[edge_id].vec
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            return (1.0, 0.0)
        return (dx / norm, dy / norm)
