"""Single-lane microscopic traffic world.

The world is stepped by the coordinator. Per step, in order: due vehicles are
inserted, then every vehicle is updated in ascending id order (new speed
first, then position), then arrivals and collisions are collected. Vehicles
owned by "ego" keep whatever speed was set externally and are only integrated
kinematically; the car-following models never touch them. Conversely a red or
yellow signal acts on model-driven vehicles as a standing virtual leader at
the stop line.

Times are integer microseconds end to end so that step boundaries compare
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import models
from .models import GapDegenerate, IdmParams, KraussParams
from .network import RoadNetwork

OWNER_TRAFFIC = "traffic"
OWNER_EGO = "ego"

SIGNAL_CHARS = frozenset("Gyr")

MIN_INSERT_HEADROOM = 10.0  # m of free lane required at the edge start


class TrafficError(Exception):
    pass


class UnknownVehicle(TrafficError):
    pass


class UnknownTls(TrafficError):
    pass


class NotOwner(TrafficError):
    pass


class BadSignalState(TrafficError):
    pass


@dataclass(frozen=True)
class VehicleType:
    id: str
    model: str = "krauss"  # "krauss" or "idm"
    length: float = 5.0
    accel: float = 2.6
    decel: float = 4.5
    tau: float = 1.0  # Krauss reaction time, or IDM time headway
    min_gap: float = 2.0
    max_speed: float | None = None
    delta: float = 4.0

    def krauss(self) -> KraussParams:
        return KraussParams(accel=self.accel, decel=self.decel, tau=self.tau)

    def idm(self) -> IdmParams:
        return IdmParams(
            accel=self.accel, decel=self.decel, t_headway=self.tau,
            s0=self.min_gap, delta=self.delta,
        )


@dataclass
class DemandEntry:
    vehicle_id: str
    vtype: VehicleType
    route: tuple[str, ...]
    depart_us: int
    owner: str = OWNER_TRAFFIC


@dataclass
class Vehicle:
    id: str
    vtype: VehicleType
    route: tuple[str, ...]
    route_index: int = 0
    lane_pos: float = 0.0  # front bumper, m from edge start
    speed: float = 0.0
    owner: str = OWNER_TRAFFIC

    @property
    def edge_id(self) -> str:
        return self.route[self.route_index]

    @property
    def next_edge_id(self) -> str | None:
        if self.route_index + 1 < len(self.route):
            return self.route[self.route_index + 1]
        return None


@dataclass
class TrafficLightProgram:
    id: str
    phases: tuple[tuple[float, str], ...]  # (duration s, signal string)
    offset: float = 0.0
    n_links: int = 0
    owner: str = OWNER_TRAFFIC
    override: str | None = None  # latched external state, ego-owned only

    @property
    def cycle(self) -> float:
        return sum(d for d, _ in self.phases)

    def scheduled_state(self, t: float) -> str:
        into = (t + self.offset) % self.cycle
        for duration, state in self.phases:
            if into < duration:
                return state
            into -= duration
        return self.phases[-1][1]  # float dust at the cycle boundary

    def state(self, t: float) -> str:
        if self.owner == OWNER_EGO and self.override is not None:
            return self.override
        return self.scheduled_state(t)


@dataclass
class StepResult:
    inserted: list[str] = field(default_factory=list)
    arrived: list[str] = field(default_factory=list)
    collisions: list[tuple[str, str, float]] = field(default_factory=list)  # follower, leader, gap


class TrafficWorld:
    def __init__(
        self,
        network: RoadNetwork,
        demand: list[DemandEntry],
        tls: dict[str, TrafficLightProgram],
        step_us: int,
    ):
        self.network = network
        self.pending = sorted(demand, key=lambda d: (d.depart_us, d.vehicle_id))
        self.tls = tls
        self.step_us = step_us
        self.vehicles: dict[str, Vehicle] = {}
        self.inserted_count = 0
        self.arrived_count = 0
        self.collision_count = 0

    # -- external command surface ---------------------------------------------

    def vehicle_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.vehicles))

    def vehicle(self, vehicle_id: str) -> Vehicle:
        try:
            return self.vehicles[vehicle_id]
        except KeyError:
            raise UnknownVehicle(vehicle_id) from None

    def position(self, vehicle_id: str) -> tuple[float, float]:
        veh = self.vehicle(vehicle_id)
        return self.network.edges[veh.edge_id].point_at(veh.lane_pos)

    def angle(self, vehicle_id: str) -> float:
        return self.network.edges[self.vehicle(vehicle_id).edge_id].heading_deg

    def set_speed(self, vehicle_id: str, speed: float) -> None:
        self.vehicle(vehicle_id).speed = max(0.0, speed)

    def claim_vehicles(self, ids: list[str] | tuple[str, ...]) -> tuple[str, ...]:
        """Hand the listed vehicles to the ego side; returns the claimed set."""
        known = {d.vehicle_id for d in self.pending} | set(self.vehicles)
        for vehicle_id in ids:
            if vehicle_id not in known:
                raise UnknownVehicle(vehicle_id)
        for vehicle_id in ids:
            if vehicle_id in self.vehicles:
                self.vehicles[vehicle_id].owner = OWNER_EGO
            for entry in self.pending:
                if entry.vehicle_id == vehicle_id:
                    entry.owner = OWNER_EGO
        return tuple(sorted(ids))

    def tls_program(self, tls_id: str) -> TrafficLightProgram:
        try:
            return self.tls[tls_id]
        except KeyError:
            raise UnknownTls(tls_id) from None

    def tls_state(self, tls_id: str, t: float) -> str:
        return self.tls_program(tls_id).state(t)

    def set_tls_state(self, tls_id: str, state: str) -> None:
        program = self.tls_program(tls_id)
        if program.owner != OWNER_EGO:
            raise NotOwner(f"{tls_id} is scheduled by the traffic side")
        if len(state) != program.n_links or not set(state) <= SIGNAL_CHARS:
            raise BadSignalState(f"want {program.n_links} chars from 'Gyr', got {state!r}")
        program.override = state  # latched until the next set

    # -- stepping -------------------------------------------------------------

    def step(self, now_us: int) -> StepResult:
        """Advance the world across [now, now + step]; returns what happened."""
        t = now_us / 1e6
        dt = self.step_us / 1e6
        result = StepResult()
        self._insert_due(now_us, result)
        for vehicle_id in sorted(self.vehicles):
            self._move(self.vehicles[vehicle_id], t, dt, result)
        for vehicle_id in result.arrived:
            del self.vehicles[vehicle_id]
        self._scan_collisions(result)
        self.inserted_count += len(result.inserted)
        self.arrived_count += len(result.arrived)
        self.collision_count += len(result.collisions)
        return result

    def _insert_due(self, now_us: int, result: StepResult) -> None:
        still_pending = []
        for entry in self.pending:
            if entry.depart_us > now_us or not self._entry_fits(entry):
                still_pending.append(entry)
                continue
            self.vehicles[entry.vehicle_id] = Vehicle(
                id=entry.vehicle_id,
                vtype=entry.vtype,
                route=entry.route,
                owner=entry.owner,
            )
            result.inserted.append(entry.vehicle_id)
        self.pending = still_pending

    def _entry_fits(self, entry: DemandEntry) -> bool:
        need = max(entry.vtype.length + entry.vtype.min_gap, MIN_INSERT_HEADROOM)
        first = entry.route[0]
        for veh in self.vehicles.values():
            if veh.edge_id == first and veh.lane_pos - veh.vtype.length < need:
                return False
        return True

    def _move(self, veh: Vehicle, t: float, dt: float, result: StepResult) -> None:
        limit = self.network.edges[veh.edge_id].speed_limit
        if veh.owner == OWNER_EGO:
            v_new = veh.speed  # externally commanded, integrate only
        else:
            v_new = self._model_speed(veh, t, dt, limit)
        veh.speed = v_new
        veh.lane_pos += v_new * dt
        while veh.lane_pos > self.network.edges[veh.edge_id].length:
            if veh.next_edge_id is None:
                result.arrived.append(veh.id)
                return
            veh.lane_pos -= self.network.edges[veh.edge_id].length
            veh.route_index += 1

    def _model_speed(self, veh: Vehicle, t: float, dt: float, limit: float) -> float:
        vtype = veh.vtype
        leader = self._leader(veh)
        # Follow models see the net gap minus the standstill buffer, so a
        # queue settles min_gap apart instead of creeping to contact.
        follow_gap = leader[1] - vtype.min_gap if leader else None
        line_gap = self._stop_line_gap(veh, t)
        if vtype.model == "krauss":
            v_new = models.krauss_next_speed(
                veh.speed,
                leader[0].speed if leader else None,
                follow_gap,
                limit,
                vtype.krauss(),
                dt,
            )
            if line_gap is not None:
                v_new = min(
                    v_new,
                    models.krauss_next_speed(
                        veh.speed, 0.0, line_gap, limit, vtype.krauss(), dt
                    ),
                )
            return v_new
        v0 = min(vtype.max_speed or limit, limit)
        accs = []
        if leader is not None:
            accs.append(self._idm_constraint(veh, leader[0].speed, follow_gap, v0))
        if line_gap is not None:
            accs.append(self._idm_constraint(veh, 0.0, line_gap, v0))
        if not accs:
            accs.append(models.idm_free_acceleration(veh.speed, v0, vtype.idm()))
        return max(0.0, min(veh.speed + min(accs) * dt, limit))

    def _idm_constraint(self, veh: Vehicle, leader_speed: float, gap: float, v0: float) -> float:
        try:
            return models.idm_acceleration(
                veh.speed, veh.speed - leader_speed, gap, v0, veh.vtype.idm()
            )
        except GapDegenerate:
            # Inside the standstill buffer; brake flat out. An actual
            # overlap is reported separately by the collision scan.
            return -models.B_EMERGENCY

    def _leader(self, veh: Vehicle) -> tuple[Vehicle, float] | None:
        """Nearest vehicle ahead on this edge, else the first on the next
        route edge; returns (leader, net gap)."""
        best: tuple[float, str, Vehicle] | None = None
        for other in self.vehicles.values():
            if other.id == veh.id or other.edge_id != veh.edge_id:
                continue
            if (other.lane_pos, other.id) > (veh.lane_pos, veh.id):
                key = (other.lane_pos, other.id)
                if best is None or key < best[:2]:
                    best = (*key, other)
        if best is not None:
            leader = best[2]
            return leader, leader.lane_pos - leader.vtype.length - veh.lane_pos
        nxt = veh.next_edge_id
        if nxt is None:
            return None
        ahead = self.network.edges[veh.edge_id].length - veh.lane_pos
        for other in sorted(self.vehicles.values(), key=lambda o: (o.lane_pos, o.id)):
            if other.id != veh.id and other.edge_id == nxt:
                return other, ahead + other.lane_pos - other.vtype.length
        return None

    def _stop_line_gap(self, veh: Vehicle, t: float) -> float | None:
        """Distance to a blocking stop line, or None when free to proceed."""
        nxt = veh.next_edge_id
        if nxt is None:
            return None
        conn = self.network.connection(veh.edge_id, nxt)
        if conn is None or conn.tls_id is None:
            return None
        state = self.tls_state(conn.tls_id, t)
        char = state[conn.link_index] if conn.link_index < len(state) else "G"
        if char == "G":
            return None
        gap = self.network.edges[veh.edge_id].length - veh.lane_pos
        if char == "y":
            # run the yellow when a comfortable stop is no longer possible
            if gap <= 0.0 or veh.speed * veh.speed > 2.0 * veh.vtype.decel * gap:
                return None
        return max(gap, 0.0)

    def _scan_collisions(self, result: StepResult) -> None:
        for vehicle_id in sorted(self.vehicles):
            veh = self.vehicles[vehicle_id]
            leader = self._leader(veh)
            if leader is not None and leader[1] < 0.0:
                result.collisions.append((veh.id, leader[0].id, leader[1]))
