"""Perception and longitudinal control for externally-owned vehicles.

The sensor is an idealized range detector: any vehicle ahead on the
route within range and with a clear sight line (zero wall crossings) is
seen. Received V2X frames contribute detections from their claimed
payload state, deliberately unvalidated so spoofed traffic has effect.

Distances fed to the controller are bumper-to-bumper along the route
polyline, which stays honest around corners where straight-line range
undershoots the braking problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import geometry
from .models import IdmParams, idm_free_acceleration
from .network import RoadNetwork
from .radio import KIND_BSM, RadioFrame

SOURCE_SENSOR = "sensor"
SOURCE_V2X = "v2x"
TRIGGER_NONE = "none"

DEFAULT_VEHICLE_LENGTH = 5.0
LATERAL_TOLERANCE_M = 3.0


@dataclass(frozen=True)
class EgoConfig:
    vehicle_ids: tuple[str, ...]
    sensor_range_m: float = 30.0
    ttc_threshold_s: float = 2.5
    comfortable_decel: float = 3.0
    emergency_decel: float = 9.0
    # standstill floor for the caution zone: 2*ttc_threshold*v alone shrinks
    # to nothing as the ego slows, which would let it creep into a stopped
    # obstacle it can no longer "close" on
    hold_clearance_m: float = 30.0
    tls_manager: str = "traffic"


@dataclass(frozen=True)
class VehicleView:
    """Wire-level snapshot of one vehicle: reference point is the front bumper."""

    id: str
    x: float
    y: float
    speed: float
    heading_deg: float = 0.0
    length: float = DEFAULT_VEHICLE_LENGTH


@dataclass(frozen=True)
class Detection:
    target: str
    distance_m: float
    closing_speed: float
    source: str


@dataclass(frozen=True)
class ControlDecision:
    commanded_speed: float
    ttc_s: float | None
    trigger: str


class RoutePath:
    """Arc-length parametrization of a route's polyline."""

    def __init__(self, points: Sequence[tuple[float, float]]) -> None:
        deduped: list[tuple[float, float]] = []
        for pt in points:
            if not deduped or math.dist(pt, deduped[-1]) > 1e-9:
                deduped.append(pt)
        if len(deduped) < 2:
            raise ValueError("route polyline needs at least two distinct points")
        self.points = deduped
        self._cum = [0.0]
        for a, b in zip(deduped, deduped[1:]):
            self._cum.append(self._cum[-1] + math.dist(a, b))

    @classmethod
    def from_route(cls, network: RoadNetwork, route: Sequence[str]) -> "RoutePath":
        points = [network.edges[eid].start for eid in route]
        last = network.edges[route[-1]]
        points.append((last.start[0] + last.vec[0], last.start[1] + last.vec[1]))
        return cls(points)

    @property
    def length(self) -> float:
        return self._cum[-1]

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(arc position, lateral offset) of the closest point on the polyline."""
        best_lat = math.inf
        best_arc = 0.0
        for i, (a, b) in enumerate(zip(self.points, self.points[1:])):
            ax, ay = a
            dx, dy = b[0] - ax, b[1] - ay
            seg_sq = dx * dx + dy * dy
            t = ((x - ax) * dx + (y - ay) * dy) / seg_sq
            t = min(1.0, max(0.0, t))
            px, py = ax + t * dx, ay + t * dy
            lat = math.hypot(x - px, y - py)
            if lat < best_lat - 1e-12:
                best_lat = lat
                best_arc = self._cum[i] + t * math.sqrt(seg_sq)
        return best_arc, best_lat


def _route_distance(ego_arc: float, ego: VehicleView, target_x: float, target_y: float,
                    target_length: float, path: RoutePath) -> float | None:
    """Bumper-to-bumper distance ahead along the route, or None if off-path/behind."""
    arc, lateral = path.project(target_x, target_y)
    if lateral > LATERAL_TOLERANCE_M:
        return _euclid_ahead(ego, target_x, target_y, target_length)
    gap = arc - ego_arc - target_length
    return gap if arc > ego_arc else None


def _euclid_ahead(ego: VehicleView, tx: float, ty: float, target_length: float) -> float | None:
    """Fallback for off-route targets: straight-line gap, forward half-plane only."""
    rad = math.radians(ego.heading_deg)
    fx, fy = math.sin(rad), math.cos(rad)
    dx, dy = tx - ego.x, ty - ego.y
    if dx * fx + dy * fy <= 0.0:
        return None
    return math.hypot(dx, dy) - target_length


def sense(
    ego: VehicleView,
    targets: Iterable[VehicleView],
    path: RoutePath,
    config: EgoConfig,
    polygons: Sequence[Sequence[tuple[float, float]]],
) -> list[Detection]:
    """Occlusion-limited forward range sensor over the current snapshot."""
    ego_arc, _ = path.project(ego.x, ego.y)
    out: list[Detection] = []
    for target in targets:
        if target.id == ego.id:
            continue
        if math.dist((ego.x, ego.y), (target.x, target.y)) > config.sensor_range_m:
            continue
        if any(geometry.crossing_count((ego.x, ego.y), (target.x, target.y), poly)
               for poly in polygons):
            continue
        gap = _route_distance(ego_arc, ego, target.x, target.y, target.length, path)
        if gap is None:
            continue
        out.append(Detection(target.id, gap, ego.speed - target.speed, SOURCE_SENSOR))
    return out


def frames_to_detections(
    ego: VehicleView,
    frames: Iterable[RadioFrame],
    path: RoutePath,
    lengths: Mapping[str, float],
) -> list[Detection]:
    """Detections from received frames, trusting every claimed position."""
    ego_arc, _ = path.project(ego.x, ego.y)
    out: list[Detection] = []
    for frame in frames:
        if frame.sender == ego.id:
            continue
        payload = frame.payload
        length = lengths.get(frame.sender, DEFAULT_VEHICLE_LENGTH)
        gap = _route_distance(ego_arc, ego, payload.x, payload.y, length, path)
        if gap is None:
            continue
        out.append(Detection(frame.sender, gap, ego.speed - payload.speed, SOURCE_V2X))
    return out


def fuse(detections: Iterable[Detection]) -> list[Detection]:
    """Keep the closest report per target, whatever its source."""
    best: dict[str, Detection] = {}
    for det in detections:
        cur = best.get(det.target)
        if cur is None or det.distance_m < cur.distance_m:
            best[det.target] = det
    return [best[k] for k in sorted(best)]


def control_step(
    ego: VehicleView,
    detections: Sequence[Detection],
    config: EgoConfig,
    desired_speed: float,
    idm: IdmParams,
    dt: float,
) -> ControlDecision:
    fused = fuse(detections)
    ttc: float | None = None
    ttc_det: Detection | None = None
    for det in fused:
        if det.closing_speed > 0.0:
            candidate = det.distance_m / det.closing_speed
            if ttc is None or candidate < ttc:
                ttc, ttc_det = candidate, det
    if ttc is not None and ttc < config.ttc_threshold_s:
        speed = max(0.0, ego.speed - config.emergency_decel * dt)
        return ControlDecision(speed, ttc, ttc_det.source)

    caution = max(2.0 * config.ttc_threshold_s * ego.speed, config.hold_clearance_m)
    near = [d for d in fused if d.distance_m < caution]
    if near:
        nearest = min(near, key=lambda d: d.distance_m)
        speed = max(0.0, ego.speed - config.comfortable_decel * dt)
        return ControlDecision(speed, ttc, nearest.source)

    accel = idm_free_acceleration(ego.speed, desired_speed, idm)
    speed = min(desired_speed, max(0.0, ego.speed + accel * dt))
    return ControlDecision(speed, ttc, TRIGGER_NONE)
