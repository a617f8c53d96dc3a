"""Broadcast V2X medium with a deterministic link budget.

Reception is pure physics: free-space path loss plus per-obstacle
shadowing (a fixed charge per wall crossed and per meter of interior
traversal), compared against a receiver sensitivity floor. There is no
MAC contention and no fading, which keeps every run reproducible.

Frames become readable by consumers one step after emission; the
RadioMailbox enforces that latency for the in-process clients.
"""

from __future__ import annotations

import json
import math
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import geometry

DEFAULT_FREQ_HZ = 5.9e9
DEFAULT_TX_POWER_DBM = 23.0
DEFAULT_SENSITIVITY_DBM = -89.0
DEFAULT_WALL_DB = 9.0
DEFAULT_INTERIOR_DB_PER_M = 0.4
BEACON_PERIOD_S = 0.1
BEACON_OFFSET_SLOTS = 10

# 20*log10(4*pi/c) to two decimals; kept literal so logged budgets match docs
FSPL_CONST_DB = 147.55

KIND_BSM = "bsm"
KIND_SYBIL = "sybil"
KIND_REPLAYED = "replayed"

NODE_VEHICLE = "vehicle"
NODE_RSU = "rsu"
NODE_PHANTOM = "phantom"


class RadioError(Exception):
    pass


class UnknownVictim(RadioError):
    """Replay capture window opened while the victim node does not exist."""


class BadAttackConfig(RadioError):
    pass


def free_space_path_loss(distance_m: float, freq_hz: float = DEFAULT_FREQ_HZ) -> float:
    """Free-space loss in dB; distances below 1 m clamp to 1 m."""
    d = max(distance_m, 1.0)
    return 20.0 * math.log10(d) + 20.0 * math.log10(freq_hz) - FSPL_CONST_DB


def obstacle_loss(
    walls: int, interior_m: float, wall_db: float = DEFAULT_WALL_DB,
    interior_db_per_m: float = DEFAULT_INTERIOR_DB_PER_M,
) -> float:
    return wall_db * walls + interior_db_per_m * interior_m


@dataclass(frozen=True)
class LinkBudget:
    """Per-link accounting; rx_power_dbm is exactly tx − path − obstacle."""

    distance_m: float
    path_loss_db: float
    wall_count: int
    interior_m: float
    obstacle_db: float
    rx_power_dbm: float


@dataclass(frozen=True)
class ChannelModel:
    freq_hz: float = DEFAULT_FREQ_HZ
    sensitivity_dbm: float = DEFAULT_SENSITIVITY_DBM
    wall_db: float = DEFAULT_WALL_DB
    interior_db_per_m: float = DEFAULT_INTERIOR_DB_PER_M

    def budget(
        self,
        tx_power_dbm: float,
        origin: tuple[float, float],
        target: tuple[float, float],
        polygons: Sequence[Sequence[tuple[float, float]]],
    ) -> LinkBudget:
        distance = math.dist(origin, target)
        path_loss = free_space_path_loss(distance, self.freq_hz)
        walls, interior = geometry.occlusion(origin, target, polygons)
        obstacle = obstacle_loss(walls, interior, self.wall_db, self.interior_db_per_m)
        return LinkBudget(
            distance_m=distance,
            path_loss_db=path_loss,
            wall_count=walls,
            interior_m=interior,
            obstacle_db=obstacle,
            rx_power_dbm=tx_power_dbm - path_loss - obstacle,
        )


@dataclass(frozen=True)
class BsmPayload:
    """Sender-claimed kinematic state. Claims are not validated anywhere."""

    x: float
    y: float
    speed: float
    heading_deg: float
    timestamp_us: int


@dataclass
class RadioNode:
    id: str
    kind: str
    x: float
    y: float
    tx_power_dbm: float = DEFAULT_TX_POWER_DBM
    vehicle_id: str | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class RadioFrame:
    frame_id: int
    kind: str
    sender: str
    payload: BsmPayload
    origin: tuple[float, float]
    tx_power_dbm: float
    emitted_at_us: int

    @property
    def attack(self) -> bool:
        return self.kind != KIND_BSM


@dataclass(frozen=True)
class NodeDiff:
    created: tuple[str, ...]
    moved: tuple[str, ...]
    retired: tuple[str, ...]


@dataclass(frozen=True)
class PacketEvent:
    """One packet-log row; budget fields are None for `sent` rows."""

    step: int
    frame_id: int
    kind: str
    sender: str
    receiver: str
    event: str
    distance_m: float | None
    path_loss_db: float | None
    obstacle_db: float | None
    rx_dbm: float | None
    attack_flag: int


@dataclass(frozen=True)
class SybilConfig:
    start_s: float
    end_s: float
    phantoms: int
    box: tuple[float, float, float, float]
    prefix: str = "phantom"


@dataclass(frozen=True)
class ReplayConfig:
    victim: str
    capture_start_s: float
    capture_end_s: float
    delay_s: float
    attacker: tuple[float, float] | None = None


def beacon_offset(node_id: str) -> int:
    """Stable per-node phase slot in [0, 10); crc32 so every runtime agrees."""
    return zlib.crc32(node_id.encode("utf-8")) % BEACON_OFFSET_SLOTS


def load_attack_config(path: str | Path) -> tuple[SybilConfig | ReplayConfig, ...]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadAttackConfig(f"{path}: {exc}") from None
    entries = doc.get("attacks", []) if isinstance(doc, dict) else None
    if entries is None or not isinstance(entries, list):
        raise BadAttackConfig(f"{path}: expected an object with an 'attacks' list")
    out: list[SybilConfig | ReplayConfig] = []
    for i, entry in enumerate(entries):
        try:
            kind = entry["kind"]
            if kind == "sybil":
                out.append(
                    SybilConfig(
                        start_s=float(entry["start_s"]),
                        end_s=float(entry["end_s"]),
                        phantoms=int(entry["phantoms"]),
                        box=tuple(float(v) for v in entry["box"]),
                        prefix=str(entry.get("prefix", "phantom")),
                    )
                )
            elif kind == "replay":
                attacker = entry.get("attacker")
                out.append(
                    ReplayConfig(
                        victim=str(entry["victim"]),
                        capture_start_s=float(entry["capture_start_s"]),
                        capture_end_s=float(entry["capture_end_s"]),
                        delay_s=float(entry["delay_s"]),
                        attacker=tuple(float(v) for v in attacker) if attacker else None,
                    )
                )
            else:
                raise BadAttackConfig(f"{path}: attacks[{i}]: unknown kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise BadAttackConfig(f"{path}: attacks[{i}]: {exc}") from None
    for cfg in out:
        if isinstance(cfg, SybilConfig) and (cfg.phantoms < 1 or len(cfg.box) != 4):
            raise BadAttackConfig(f"{path}: sybil needs phantoms >= 1 and a 4-number box")
        if isinstance(cfg, ReplayConfig) and cfg.delay_s <= 0:
            raise BadAttackConfig(f"{path}: replay delay must be positive")
    return tuple(out)


class _ReplayState:
    """Captured victim frames waiting for their delayed re-emission."""

    def __init__(self, config: ReplayConfig, step_length_s: float) -> None:
        self.config = config
        self.capture_start_step = round(config.capture_start_s / step_length_s)
        self.capture_end_step = round(config.capture_end_s / step_length_s)
        self.delay_steps = max(1, round(config.delay_s / step_length_s))
        self.checked = False
        self.queue: list[tuple[int, BsmPayload, float]] = []

    def capturing(self, step: int) -> bool:
        return self.capture_start_step <= step < self.capture_end_step


class RadioMedium:
    """Owns nodes, beacon cadence, attack streams and frame delivery.

    All iteration orders are canonical (sorted node ids, config order,
    ascending frame id), so frame numbering and the packet log never
    depend on dict insertion history.
    """

    def __init__(
        self,
        channel: ChannelModel,
        polygons: Sequence[Sequence[tuple[float, float]]],
        step_length_s: float,
        attack_rng,
        attacks: Iterable[SybilConfig | ReplayConfig] = (),
        tx_power_dbm: float = DEFAULT_TX_POWER_DBM,
    ) -> None:
        self.channel = channel
        self.polygons = list(polygons)
        self.step_length_s = step_length_s
        self.tx_power_dbm = tx_power_dbm
        self.nodes: dict[str, RadioNode] = {}
        self._speeds: dict[str, float] = {}
        self._headings: dict[str, float] = {}
        self._rng = attack_rng
        self._next_frame_id = 0
        self._period_steps = max(1, round(BEACON_PERIOD_S / step_length_s))
        self._sybils: list[SybilConfig] = []
        self._replays: list[_ReplayState] = []
        for cfg in attacks:
            if isinstance(cfg, SybilConfig):
                self._sybils.append(cfg)
            else:
                self._replays.append(_ReplayState(cfg, step_length_s))

    # -- node population ------------------------------------------------

    def add_rsu(self, node_id: str, x: float, y: float) -> RadioNode:
        node = RadioNode(node_id, NODE_RSU, x, y, self.tx_power_dbm)
        self.nodes[node_id] = node
        return node

    def sync_vehicles(
        self, snapshot: Mapping[str, tuple[float, float, float, float]]
    ) -> NodeDiff:
        """Mirror the vehicle population: snapshot maps id -> (x, y, speed, heading)."""
        created, moved, retired = [], [], []
        for vid in sorted(snapshot):
            x, y, _speed, _heading = snapshot[vid]
            node = self.nodes.get(vid)
            if node is None:
                self.nodes[vid] = RadioNode(vid, NODE_VEHICLE, x, y, self.tx_power_dbm, vid)
                created.append(vid)
            elif (node.x, node.y) != (x, y):
                node.x, node.y = x, y
                moved.append(vid)
        for vid in sorted(self.nodes):
            if self.nodes[vid].kind == NODE_VEHICLE and vid not in snapshot:
                del self.nodes[vid]
                retired.append(vid)
        self._speeds = {vid: snapshot[vid][2] for vid in snapshot}
        self._headings = {vid: snapshot[vid][3] for vid in snapshot}
        return NodeDiff(tuple(created), tuple(moved), tuple(retired))

    # -- emission -------------------------------------------------------

    def _beacon_due(self, node_id: str, step: int) -> bool:
        return step % self._period_steps == beacon_offset(node_id) % self._period_steps

    def emit(self, step: int, now_us: int) -> list[RadioFrame]:
        """All frames transmitted this step: beacons first, then attacks."""
        frames: list[RadioFrame] = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.kind == NODE_PHANTOM or not self._beacon_due(node_id, step):
                continue
            speed = self._speeds.get(node_id, 0.0)
            heading = self._headings.get(node_id, 0.0)
            payload = BsmPayload(node.x, node.y, speed, heading, now_us)
            frames.append(self._frame(KIND_BSM, node_id, payload, node.position, now_us))
        self._capture(frames, step)
        frames.extend(self._sybil_frames(step, now_us))
        frames.extend(self._replay_frames(step, now_us))
        return frames

    def _frame(
        self, kind: str, sender: str, payload: BsmPayload,
        origin: tuple[float, float], now_us: int,
    ) -> RadioFrame:
        frame = RadioFrame(self._next_frame_id, kind, sender, payload, origin,
                           self.tx_power_dbm, now_us)
        self._next_frame_id += 1
        return frame

    def _sybil_frames(self, step: int, now_us: int) -> list[RadioFrame]:
        frames: list[RadioFrame] = []
        for cfg in self._sybils:
            start = round(cfg.start_s / self.step_length_s)
            end = round(cfg.end_s / self.step_length_s)
            if not start <= step < end:
                continue
            x0, y0, x1, y1 = cfg.box
            for i in range(cfg.phantoms):
                sender = f"{cfg.prefix}{i}"
                if not self._beacon_due(sender, step):
                    continue
                x = self._rng.uniform(min(x0, x1), max(x0, x1))
                y = self._rng.uniform(min(y0, y1), max(y0, y1))
                self.nodes[sender] = RadioNode(sender, NODE_PHANTOM, x, y, self.tx_power_dbm)
                payload = BsmPayload(x, y, 0.0, 0.0, now_us)
                frames.append(self._frame(KIND_SYBIL, sender, payload, (x, y), now_us))
        return frames

    def _capture(self, beacons: Sequence[RadioFrame], step: int) -> None:
        for state in self._replays:
            if step == state.capture_start_step and not state.checked:
                state.checked = True
                if state.config.victim not in self.nodes:
                    raise UnknownVictim(state.config.victim)
            if not state.capturing(step):
                continue
            for frame in beacons:
                if frame.kind == KIND_BSM and frame.sender == state.config.victim:
                    state.queue.append(
                        (step + state.delay_steps, frame.payload, frame.tx_power_dbm)
                    )

    def _replay_frames(self, step: int, now_us: int) -> list[RadioFrame]:
        frames: list[RadioFrame] = []
        for state in self._replays:
            due = [item for item in state.queue if item[0] == step]
            for _, payload, tx_power in due:
                origin = state.config.attacker or (payload.x, payload.y)
                frames.append(
                    self._frame(KIND_REPLAYED, state.config.victim, payload, origin, now_us)
                )
            state.queue = [item for item in state.queue if item[0] > step]
        return frames

    # -- delivery -------------------------------------------------------

    def deliver(
        self, frames: Sequence[RadioFrame], step: int
    ) -> tuple[list[PacketEvent], list[tuple[str, RadioFrame]]]:
        """Log rows plus (receiver id, frame) receptions for this step.

        Phantom identities transmit but have no receiver hardware, so
        delivery targets vehicle and rsu nodes only.
        """
        events: list[PacketEvent] = []
        receptions: list[tuple[str, RadioFrame]] = []
        for frame in frames:
            flag = 1 if frame.attack else 0
            events.append(
                PacketEvent(step, frame.frame_id, frame.kind, frame.sender, "", "sent",
                            None, None, None, None, flag)
            )
            for node_id in sorted(self.nodes):
                node = self.nodes[node_id]
                if node.kind == NODE_PHANTOM or node_id == frame.sender:
                    continue
                budget = self.channel.budget(
                    frame.tx_power_dbm, frame.origin, node.position, self.polygons
                )
                received = budget.rx_power_dbm >= self.channel.sensitivity_dbm
                events.append(
                    PacketEvent(
                        step, frame.frame_id, frame.kind, frame.sender, node_id,
                        "received" if received else "lost",
                        budget.distance_m, budget.path_loss_db,
                        budget.obstacle_db, budget.rx_power_dbm, flag,
                    )
                )
                if received:
                    receptions.append((node_id, frame))
        return events, receptions


class RadioMailbox:
    """Thread-safe frame holding pen enforcing the one-step latency rule."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._held: dict[str, list[tuple[int, RadioFrame]]] = {}

    def post(self, receiver: str, frame: RadioFrame, readable_at_step: int) -> None:
        with self._lock:
            self._held.setdefault(receiver, []).append((readable_at_step, frame))

    def take(self, receiver: str, now_step: int) -> list[RadioFrame]:
        """Pop every frame whose readability step has been reached."""
        with self._lock:
            held = self._held.get(receiver, [])
            ready = [frame for at, frame in held if at <= now_step]
            self._held[receiver] = [(at, f) for at, f in held if at > now_step]
            return ready
