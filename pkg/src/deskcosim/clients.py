"""Embedded clients: the radio medium (order 1) and the ego layer (order 2).

Both run the same loop shape over a private wire connection: read the
window's world snapshot, do their own work, push writes, vote for the
step, repeat until the server announces the end of the run. They talk
to each other only through the one-step-delayed frame mailbox, never by
sharing Python state, so an external replacement for either side sees
identical behaviour.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from . import ego as egomod
from . import wire
from .client import ServerClosed, WireClient
from .models import IdmParams
from .radio import (
    ChannelModel,
    PacketEvent,
    RadioMailbox,
    RadioMedium,
    ReplayConfig,
    SybilConfig,
)
from .results import fmt_time, substream
from .scenario import ScenarioBundle

PACKETS_HEADER = (
    "step,time_s,frame_id,kind,sender,receiver,event,"
    "distance_m,path_loss_db,obstacle_db,rx_dbm,attack_flag"
)
EGO_HEADER = "step,id,x,y,speed,commanded_speed,ttc,trigger_source"


def _opt(value: float | None) -> str:
    return "" if value is None else repr(value)


def packet_row(event: PacketEvent, step_length_s: float) -> str:
    t = fmt_time(event.step * step_length_s)
    return (
        f"{event.step},{t},{event.frame_id},{event.kind},{event.sender},"
        f"{event.receiver},{event.event},{_opt(event.distance_m)},"
        f"{_opt(event.path_loss_db)},{_opt(event.obstacle_db)},"
        f"{_opt(event.rx_dbm)},{event.attack_flag}"
    )


def _snapshot(client: WireClient) -> dict[str, tuple[float, float, float, float]]:
    """id -> (x, y, speed, heading) for every vehicle in the world."""
    ids = client.vehicle_ids()
    if not ids:
        return {}
    requests = []
    for vid in ids:
        requests.extend(
            [(wire.VAR_POSITION, vid), (wire.VAR_SPEED, vid), (wire.VAR_ANGLE, vid)]
        )
    values = client.get_vehicles(requests)
    out = {}
    for i, vid in enumerate(ids):
        (x, y) = values[3 * i].value
        out[vid] = (x, y, values[3 * i + 1].value, values[3 * i + 2].value)
    return out


@dataclass
class RadioClientLoop:
    """Order-1 client: owns the shared medium and the packet log."""

    host: str
    port: int
    bundle: ScenarioBundle
    seed: int
    mailbox: RadioMailbox
    enabled: bool = True
    attacks: Sequence[SybilConfig | ReplayConfig] = ()
    rows: list[str] = field(default_factory=lambda: [PACKETS_HEADER])
    frames_sent: int = 0
    frames_received: int = 0
    frames_lost: int = 0
    frames_attack: int = 0
    error: BaseException | None = None

    def run(self) -> None:
        try:
            self._run()
        except ServerClosed:
            pass
        except BaseException as exc:  # surfaced by the launcher after join
            self.error = exc
            raise

    def _run(self) -> None:
        dt = self.bundle.step_length_s
        step_us = round(dt * 1e6)
        medium = RadioMedium(
            ChannelModel(),
            self.bundle.polygons,
            dt,
            random.Random(substream(self.seed, "attack")),
            self.attacks,
        )
        client = WireClient(self.host, self.port)
        try:
            client.handshake(1)
            k = 0
            while True:
                if self.enabled:
                    medium.sync_vehicles(_snapshot(client))
                    frames = medium.emit(k, k * step_us)
                    events, receptions = medium.deliver(frames, k)
                    for event in events:
                        self.rows.append(packet_row(event, dt))
                        if event.event == "sent":
                            self.frames_sent += 1
                            self.frames_attack += event.attack_flag
                        elif event.event == "received":
                            self.frames_received += 1
                        else:
                            self.frames_lost += 1
                    for receiver, frame in receptions:
                        self.mailbox.post(receiver, frame, k + 1)
                client.step()
                k += 1
        finally:
            client.abort()


@dataclass
class EgoClientLoop:
    """Order-2 client: sensing, fusion, and speed control for claimed ids."""

    host: str
    port: int
    bundle: ScenarioBundle
    config: egomod.EgoConfig
    mailbox: RadioMailbox
    rows: list[str] = field(default_factory=lambda: [EGO_HEADER])
    speed_series: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    trigger_counts: dict[str, int] = field(
        default_factory=lambda: {egomod.SOURCE_SENSOR: 0, egomod.SOURCE_V2X: 0}
    )
    error: BaseException | None = None

    def run(self) -> None:
        try:
            self._run()
        except ServerClosed:
            pass
        except BaseException as exc:
            self.error = exc
            raise

    def _run(self) -> None:
        bundle = self.bundle
        dt = bundle.step_length_s
        by_id = {entry.vehicle_id: entry for entry in bundle.demand}
        lengths = {vid: entry.vtype.length for vid, entry in by_id.items()}
        paths: dict[str, egomod.RoutePath] = {}
        desired: dict[str, float] = {}
        idm: dict[str, IdmParams] = {}
        for vid in self.config.vehicle_ids:
            entry = by_id[vid]
            paths[vid] = egomod.RoutePath.from_route(bundle.network, entry.route)
            limit = min(bundle.network.edges[eid].speed_limit for eid in entry.route)
            if entry.vtype.max_speed is not None:
                limit = min(limit, entry.vtype.max_speed)
            desired[vid] = limit
            idm[vid] = entry.vtype.idm()
        mirrored: dict[str, str] = {}

        client = WireClient(self.host, self.port)
        try:
            client.handshake(2)
            k = 0
            while True:
                snapshot = _snapshot(client)
                views = {
                    vid: egomod.VehicleView(
                        vid, x, y, speed, heading, lengths.get(vid, 5.0)
                    )
                    for vid, (x, y, speed, heading) in snapshot.items()
                }
                for vid in self.config.vehicle_ids:
                    view = views.get(vid)
                    if view is None:
                        continue  # not yet departed, or already arrived
                    targets = [v for other, v in sorted(views.items()) if other != vid]
                    detections = egomod.sense(
                        view, targets, paths[vid], self.config, bundle.polygons
                    )
                    frames = self.mailbox.take(vid, k)
                    detections += egomod.frames_to_detections(
                        view, frames, paths[vid], lengths
                    )
                    decision = egomod.control_step(
                        view, detections, self.config, desired[vid], idm[vid], dt
                    )
                    client.set_speed(vid, decision.commanded_speed)
                    self._record(k, view, decision)
                if self.config.tls_manager == "ego":
                    for tls_id in sorted(bundle.tls):
                        state = bundle.tls[tls_id].scheduled_state(k * dt)
                        if mirrored.get(tls_id) != state:
                            client.set_tls_state(tls_id, state)
                            mirrored[tls_id] = state
                client.step()
                k += 1
        finally:
            client.abort()

    def _record(self, step: int, view: egomod.VehicleView, decision) -> None:
        ttc = "" if decision.ttc_s is None else repr(decision.ttc_s)
        self.rows.append(
            f"{step},{view.id},{view.x!r},{view.y!r},{view.speed!r},"
            f"{decision.commanded_speed!r},{ttc},{decision.trigger}"
        )
        if decision.trigger in self.trigger_counts:
            self.trigger_counts[decision.trigger] += 1
        series = self.speed_series.setdefault(view.id, [])
        series.append((step * self.bundle.step_length_s, view.speed))
