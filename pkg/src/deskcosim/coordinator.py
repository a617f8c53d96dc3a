"""Lockstep TCP coordinator: one world, N clients, one barrier.

Clients connect, declare a unique execution order, and then drive the
run in rounds: any number of get/set batches followed by exactly one
step vote. The round ends only when every live client has voted; the
world then advances one step and the deferred vote replies are written
in ascending execution order. A client closing the connection, cleanly
or not, ends the whole run.

Determinism is the point of the design. Within a round each client sees
the pre-step world plus its own writes (a private overlay), never a
peer's; overlays are merged in execution order at the barrier; and the
event log is buffered per client per round and flushed in (order,
sequence) order, so the bytes written never depend on wall-clock
arrival interleaving.
"""

from __future__ import annotations

import math
import selectors
import socket
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .results import fmt_time
from .scenario import ScenarioBundle
from .traffic import (
    OWNER_EGO,
    SIGNAL_CHARS,
    BadSignalState,
    NotOwner,
    TrafficError,
    TrafficWorld,
)

EXIT_CLEAN = 0
EXIT_FAULT = 2
EXIT_TIMEOUT = 3

DEFAULT_PORT = 9999


class CoordinatorError(Exception):
    pass


class PortInUse(CoordinatorError):
    pass


class InvalidScenario(CoordinatorError):
    pass


@dataclass
class SimClock:
    """Integer-microsecond simulation time; never a float accumulator."""

    step_us: int
    now_us: int = 0

    @property
    def now_s(self) -> float:
        return self.now_us / 1e6

    @property
    def next_boundary_s(self) -> float:
        return (self.now_us + self.step_us) / 1e6

    def advance(self) -> None:
        self.now_us += self.step_us


@dataclass
class _Session:
    sock: socket.socket
    name: str
    state: str = "connected"  # -> ordered -> (ready <-> step_requested) -> closed
    order: int = 0
    buf: bytes = b""
    prestart: list[list[wire.WireCommand]] = field(default_factory=list)
    overlay_speed: dict[str, float] = field(default_factory=dict)
    overlay_tls: dict[str, str] = field(default_factory=dict)
    events: list[str] = field(default_factory=list)


class Coordinator:
    """Owns the listening socket, the world, and both output logs.

    ``serve`` blocks until the run ends and returns the process exit
    code: 0 for a clean finish, 2 for a protocol fault or truncated
    connection, 3 when too few clients join before the deadline.
    """

    def __init__(
        self,
        bundle: ScenarioBundle,
        *,
        expected_clients: int,
        seed: int,
        out_dir: str | Path,
        port: int = DEFAULT_PORT,
        host: str = "127.0.0.1",
        connect_timeout_s: float = 30.0,
        tls_manager: str = "traffic",
        ego_ids: tuple[str, ...] = (),
    ) -> None:
        if expected_clients < 1:
            raise InvalidScenario("expected_clients must be >= 1")
        if tls_manager not in ("traffic", "ego"):
            raise InvalidScenario(f"unknown tls manager {tls_manager!r}")
        self.bundle = bundle
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.expected_clients = expected_clients
        self.connect_timeout_s = connect_timeout_s
        self.clock = SimClock(step_us=round(bundle.step_length_s * 1e6))
        self.total_steps = (
            round(bundle.end_s / bundle.step_length_s) if bundle.end_s is not None else None
        )
        for program in bundle.tls.values():
            program.owner = tls_manager
        self.world = TrafficWorld(
            bundle.network, list(bundle.demand), dict(bundle.tls), self.clock.step_us
        )
        if ego_ids:
            self.world.claim_vehicles(list(ego_ids))

        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._listener.bind((host, port))
        except OSError as exc:
            self._listener.close()
            raise PortInUse(f"cannot bind {host}:{port}: {exc}") from None
        self._listener.listen(expected_clients + 2)
        self.port = self._listener.getsockname()[1]

        self._sel = selectors.DefaultSelector()
        self._sessions: list[_Session] = []
        self._running = False
        self._done = False
        self.exit_code: int | None = None
        self.step_index = 0
        self.collision_count = 0
        self.step_vehicle_counts: list[int] = []
        self._event_lines: list[str] = []
        self._traj_lines = ["step,time_s,id,edge,lane_pos,x,y,speed,owner"]

    # -- logging --------------------------------------------------------

    def _client_event(self, session: _Session, cmd_id: int, text: str) -> None:
        name = wire.COMMAND_NAMES.get(cmd_id, f"0x{cmd_id:02X}")
        line = f"t={fmt_time(self.clock.now_s)} client={session.order} cmd={name} {text}"
        session.events.append(line)

    def _world_event(self, t_s: float, text: str) -> None:
        self._event_lines.append(f"t={fmt_time(t_s)} world {text}")

    def _run_event(self, text: str) -> None:
        self._event_lines.append(f"t={fmt_time(self.clock.now_s)} {text}")

    def _flush_session_events(self) -> None:
        for session in sorted(self._ordered(), key=lambda s: s.order):
            self._event_lines.extend(session.events)
            session.events.clear()

    # -- lifecycle ------------------------------------------------------

    def serve(self) -> int:
        try:
            self._join_phase()
            if not self._done:
                self._run_phase()
        finally:
            self._close_all()
            self._write_outputs()
        assert self.exit_code is not None
        return self.exit_code

    def _ordered(self) -> list[_Session]:
        return [s for s in self._sessions if s.state in ("ordered", "ready", "step_requested")]

    def _join_phase(self) -> None:
        deadline = time.monotonic() + self.connect_timeout_s
        self._sel.register(self._listener, selectors.EVENT_READ, None)
        while not self._done and len(self._ordered()) < self.expected_clients:
            budget = deadline - time.monotonic()
            if budget <= 0:
                self._flush_session_events()
                self._run_event(
                    f"run-end reason=connect-timeout joined={len(self._ordered())}"
                    f"/{self.expected_clients} exit={EXIT_TIMEOUT}"
                )
                self._shutdown_remaining(EXIT_TIMEOUT)
                return
            for key, _ in self._sel.select(timeout=budget):
                if key.data is None:
                    self._accept()
                else:
                    self._read(key.data)
                if self._done:
                    return
        if self._done:
            return
        self._sel.unregister(self._listener)
        self._listener.close()
        self._running = True
        for session in self._ordered():
            session.state = "ready"
        self._flush_session_events()
        self._run_event(f"run-start clients={self.expected_clients} seed={self.seed}")
        if self.total_steps == 0:
            self._shutdown("end-reached", EXIT_CLEAN)
            return
        for session in sorted(self._ordered(), key=lambda s: s.order):
            for batch in session.prestart:
                if self._done or session.state == "closed":
                    return
                self._handle_batch(session, batch)
            session.prestart.clear()

    def _run_phase(self) -> None:
        while not self._done:
            for key, _ in self._sel.select(timeout=None):
                self._read(key.data)
                if self._done:
                    return

    def _accept(self) -> None:
        sock, addr = self._listener.accept()
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        session = _Session(sock, name=f"{addr[0]}:{addr[1]}")
        self._sessions.append(session)
        self._sel.register(sock, selectors.EVENT_READ, session)

    def _read(self, session: _Session) -> None:
        try:
            data = session.sock.recv(65536)
        except OSError:
            data = b""
        if not data:
            self._on_eof(session)
            return
        session.buf += data
        while True:
            try:
                commands, session.buf = wire.decode_message(session.buf)
            except wire.TruncatedFrame:
                return
            except wire.ProtocolError as exc:
                self._fault(session, wire.CMD_CLOSE, f"bad frame: {exc}")
                return
            if commands:
                self._dispatch(session, commands)
            if self._done or session.state == "closed":
                return

    # -- command handling -----------------------------------------------

    def _dispatch(self, session: _Session, commands: list[wire.WireCommand]) -> None:
        if session.state == "connected":
            self._handle_join(session, commands)
        elif session.state == "ordered":
            # barrier not staffed yet: batches wait until the run starts
            if any(c.id == wire.CMD_CLOSE for c in commands):
                self._client_event(session, wire.CMD_CLOSE, "ok")
                self._reply(session, wire.status(wire.CMD_CLOSE, wire.STATUS_OK))
                self._shutdown("close-before-start", EXIT_CLEAN, skip=session)
            else:
                session.prestart.append(commands)
        elif session.state == "step_requested":
            self._fault(session, commands[0].id, "batch while step vote pending")
        else:
            self._handle_batch(session, commands)

    def _handle_join(self, session: _Session, commands: list[wire.WireCommand]) -> None:
        cmd = commands[0]
        if cmd.id == wire.CMD_CLOSE:
            self._drop(session)
            return
        if cmd.id != wire.CMD_SETORDER or len(cmd.payload) != 4:
            self._reply(
                session, wire.status(cmd.id, wire.STATUS_ERR, "expected SETORDER first")
            )
            self._drop(session)
            return
        order = struct.unpack("!i", cmd.payload)[0]
        taken = {s.order for s in self._ordered()}
        if not 1 <= order <= self.expected_clients:
            desc = f"order {order} outside 1..{self.expected_clients}"
        elif order in taken:
            desc = f"order {order} already taken"
        else:
            session.order = order
            session.state = "ordered"
            self._client_event(session, wire.CMD_SETORDER, f"ok order={order}")
            self._reply(session, wire.status(wire.CMD_SETORDER, wire.STATUS_OK))
            if len(commands) > 1:
                session.prestart.append(commands[1:])
            return
        # rejected attempts are logged in arrival order, outside the
        # per-order buffers: they never belong to a numbered slot
        self._event_lines.append(
            f"t={fmt_time(self.clock.now_s)} client=? cmd=SETORDER rejected desc={desc!r}"
        )
        self._reply(session, wire.status(wire.CMD_SETORDER, wire.STATUS_ERR, desc))
        self._drop(session)

    def _handle_batch(self, session: _Session, commands: list[wire.WireCommand]) -> None:
        responses: list[wire.WireCommand] = []
        saw_step = False
        voted = False
        for cmd in commands:
            if saw_step:
                self._fault(session, cmd.id, "command after step request in one batch")
                return
            try:
                if cmd.id in (wire.CMD_GET_VEHICLE, wire.CMD_GET_TLS):
                    responses.extend(self._do_get(session, cmd))
                elif cmd.id in (wire.CMD_SET_VEHICLE, wire.CMD_SET_TLS):
                    responses.extend(self._do_set(session, cmd))
                elif cmd.id == wire.CMD_SIMSTEP:
                    saw_step = True
                    voted = self._do_vote(session, cmd, responses)
                elif cmd.id == wire.CMD_CLOSE:
                    self._client_event(session, wire.CMD_CLOSE, "ok")
                    self._reply(
                        session, *responses, wire.status(wire.CMD_CLOSE, wire.STATUS_OK)
                    )
                    self._shutdown("close", EXIT_CLEAN, skip=session)
                    return
                else:
                    self._fault(session, cmd.id, "command not valid after start")
                    return
            except wire.ProtocolError as exc:
                self._fault(session, cmd.id, f"malformed payload: {exc}")
                return
        if responses:
            self._reply(session, *responses)
        if voted:
            self._maybe_release()

    def _do_get(self, session: _Session, cmd: wire.WireCommand) -> list[wire.WireCommand]:
        variable, obj = wire.parse_get(cmd)
        try:
            value = self._read_variable(session, cmd.id, variable, obj)
        except TrafficError as exc:
            desc = f"{type(exc).__name__}: {exc}"
            self._client_event(session, cmd.id, f"error var=0x{variable:02X} desc={desc!r}")
            return [wire.status(cmd.id, wire.STATUS_ERR, desc)]
        self._client_event(session, cmd.id, f"ok var=0x{variable:02X} obj={obj!r}")
        return [wire.status(cmd.id, wire.STATUS_OK), wire.result(cmd.id, variable, obj, value)]

    def _read_variable(
        self, session: _Session, cmd_id: int, variable: int, obj: str
    ) -> wire.TypedValue:
        world = self.world
        if cmd_id == wire.CMD_GET_VEHICLE:
            if variable == wire.VAR_ID_LIST:
                return wire.TypedValue(wire.TYPE_STRINGLIST, world.vehicle_ids())
            if variable == wire.VAR_SPEED:
                if obj in session.overlay_speed:
                    return wire.TypedValue(wire.TYPE_DOUBLE, session.overlay_speed[obj])
                return wire.TypedValue(wire.TYPE_DOUBLE, world.vehicle(obj).speed)
            if variable == wire.VAR_POSITION:
                return wire.TypedValue(wire.TYPE_POSITION, world.position(obj))
            if variable == wire.VAR_ANGLE:
                return wire.TypedValue(wire.TYPE_DOUBLE, world.angle(obj))
        else:
            if variable == wire.VAR_ID_LIST:
                return wire.TypedValue(wire.TYPE_STRINGLIST, tuple(sorted(world.tls)))
            if variable == wire.VAR_TLS_STATE:
                if obj in session.overlay_tls:
                    return wire.TypedValue(wire.TYPE_STRING, session.overlay_tls[obj])
                return wire.TypedValue(wire.TYPE_STRING, world.tls_state(obj, self.clock.now_s))
        raise wire.MalformedCommand(f"unsupported variable 0x{variable:02X}")

    def _do_set(self, session: _Session, cmd: wire.WireCommand) -> list[wire.WireCommand]:
        variable, obj, value = wire.parse_set(cmd)
        try:
            if cmd.id == wire.CMD_SET_VEHICLE and variable == wire.VAR_SPEED:
                if value.tag != wire.TYPE_DOUBLE:
                    raise wire.MalformedCommand("speed must be a double")
                self.world.vehicle(obj)  # existence check against the live world
                session.overlay_speed[obj] = max(0.0, float(value.value))
            elif cmd.id == wire.CMD_SET_TLS and variable == wire.VAR_TLS_STATE:
                if value.tag != wire.TYPE_STRING:
                    raise wire.MalformedCommand("tls state must be a string")
                self._check_tls_write(obj, str(value.value))
                session.overlay_tls[obj] = str(value.value)
            else:
                raise wire.MalformedCommand(f"unsupported variable 0x{variable:02X}")
        except TrafficError as exc:
            desc = f"{type(exc).__name__}: {exc}"
            self._client_event(session, cmd.id, f"error var=0x{variable:02X} desc={desc!r}")
            return [wire.status(cmd.id, wire.STATUS_ERR, desc)]
        self._client_event(session, cmd.id, f"ok var=0x{variable:02X} obj={obj!r}")
        return [wire.status(cmd.id, wire.STATUS_OK)]

    def _check_tls_write(self, tls_id: str, state: str) -> None:
        # overlay writes are validated on receipt so the barrier merge
        # cannot fail; mirrors the checks the world applies on latch
        program = self.world.tls_program(tls_id)
        if program.owner != OWNER_EGO:
            raise NotOwner(f"{tls_id} is owned by the traffic side")
        if len(state) != program.n_links or not set(state) <= SIGNAL_CHARS:
            raise BadSignalState(f"want {program.n_links} chars from 'Gyr', got {state!r}")

    def _do_vote(
        self, session: _Session, cmd: wire.WireCommand, responses: list[wire.WireCommand]
    ) -> bool:
        if len(cmd.payload) != 8:
            raise wire.MalformedCommand("step target must be one double")
        target = struct.unpack("!d", cmd.payload)[0]
        boundary = self.clock.next_boundary_s
        if target != 0.0 and not math.isclose(target, boundary, abs_tol=1e-9):
            desc = f"target {target!r} is neither 0.0 nor {boundary!r}"
            self._client_event(session, cmd.id, f"error desc={desc!r}")
            responses.append(wire.status(cmd.id, wire.STATUS_ERR, desc))
            return False
        session.state = "step_requested"
        self._client_event(session, cmd.id, "deferred")
        return True

    # -- barrier --------------------------------------------------------

    def _maybe_release(self) -> None:
        live = self._ordered()
        if not live or any(s.state != "step_requested" for s in live):
            return
        self._flush_session_events()
        start_s = self.clock.now_s
        for session in sorted(live, key=lambda s: s.order):
            for vid, speed in session.overlay_speed.items():
                try:
                    self.world.set_speed(vid, speed)
                except TrafficError:
                    pass  # vehicle arrived in an earlier window; the write is moot
            for tls_id, state in session.overlay_tls.items():
                self.world.set_tls_state(tls_id, state)
            session.overlay_speed.clear()
            session.overlay_tls.clear()
        self._snapshot_trajectories(start_s)
        result = self.world.step(self.clock.now_us)
        self.clock.advance()
        end_s = self.clock.now_s
        for vid in result.inserted:
            self._world_event(start_s, f"insert id={vid} edge={self.world.vehicle(vid).edge_id}")
        for vid in result.arrived:
            self._world_event(end_s, f"arrive id={vid}")
        for follower, leader, gap in result.collisions:
            self.collision_count += 1
            self._world_event(
                end_s, f"CollisionDetected follower={follower} leader={leader} gap={gap!r}"
            )
        self._world_event(
            end_s, f"advance step={self.step_index} vehicles={len(self.world.vehicles)}"
        )
        self.step_vehicle_counts.append(len(self.world.vehicles))
        for session in sorted(live, key=lambda s: s.order):
            session.state = "ready"
            self._reply(session, wire.status(wire.CMD_SIMSTEP, wire.STATUS_OK))
            if self._done:
                return
        self.step_index += 1
        if self.total_steps is not None and self.step_index >= self.total_steps:
            self._shutdown("end-reached", EXIT_CLEAN)

    def _snapshot_trajectories(self, t_s: float) -> None:
        # pre-step state at the window time: exactly what clients read
        # during the round, so their own logs line up row for row
        for vid in self.world.vehicle_ids():
            veh = self.world.vehicle(vid)
            x, y = self.world.position(vid)
            self._traj_lines.append(
                f"{self.step_index},{fmt_time(t_s)},{vid},{veh.edge_id},"
                f"{veh.lane_pos!r},{x!r},{y!r},{veh.speed!r},{veh.owner}"
            )

    # -- failure and shutdown -------------------------------------------

    def _reply(self, session: _Session, *commands: wire.WireCommand) -> None:
        try:
            session.sock.sendall(wire.encode_message(list(commands)))
        except OSError:
            self._on_eof(session)

    def _fault(self, session: _Session, cmd_id: int, desc: str) -> None:
        self._client_event(session, cmd_id, f"fault desc={desc!r}")
        try:
            session.sock.sendall(
                wire.encode_message([wire.status(cmd_id, wire.STATUS_ERR, desc)])
            )
        except OSError:
            pass
        was_ordered = session.state in ("ordered", "ready", "step_requested")
        order = session.order
        if was_ordered:
            self._flush_session_events()
            self._drop(session)
            self._run_event(f"run-end reason=protocol-fault client={order} exit={EXIT_FAULT}")
            self._shutdown_remaining(EXIT_FAULT)
        else:
            self._drop(session)

    def _on_eof(self, session: _Session) -> None:
        was_ordered = session.state in ("ordered", "ready", "step_requested")
        order = session.order
        if was_ordered and self._running and not self._done:
            self._flush_session_events()
            self._drop(session)
            self._run_event(
                f"run-end reason=eof-truncation client={order} exit={EXIT_FAULT}"
            )
            self._shutdown_remaining(EXIT_FAULT)
        else:
            # before the run starts a vanished client frees its slot;
            # the join deadline still bounds the wait
            self._drop(session)

    def _shutdown(self, reason: str, exit_code: int, skip: _Session | None = None) -> None:
        self._flush_session_events()
        self._run_event(f"run-end reason={reason} exit={exit_code}")
        if skip is not None:
            self._drop(skip)
        self._shutdown_remaining(exit_code)

    def _shutdown_remaining(self, exit_code: int) -> None:
        for session in sorted(self._ordered(), key=lambda s: s.order):
            frames: list[wire.WireCommand] = []
            if session.state == "step_requested":
                frames.append(wire.status(wire.CMD_SIMSTEP, wire.STATUS_OK))
            frames.append(wire.close())
            try:
                session.sock.sendall(wire.encode_message(frames))
            except OSError:
                pass
        self._finish(exit_code)

    def _finish(self, exit_code: int) -> None:
        self._done = True
        if self.exit_code is None:
            self.exit_code = exit_code

    def _drop(self, session: _Session) -> None:
        if session.state == "closed":
            return
        session.state = "closed"
        try:
            self._sel.unregister(session.sock)
        except (KeyError, ValueError):
            pass
        try:
            session.sock.close()
        except OSError:
            pass

    def _close_all(self) -> None:
        for session in self._sessions:
            self._drop(session)
        try:
            self._listener.close()
        except OSError:
            pass
        self._sel.close()

    def _write_outputs(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "events.log").write_text(
            "".join(line + "\n" for line in self._event_lines), encoding="utf-8"
        )
        (self.out_dir / "trajectories.csv").write_text(
            "".join(line + "\n" for line in self._traj_lines), encoding="utf-8"
        )
