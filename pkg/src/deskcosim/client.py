"""Blocking client session for the coordinator wire protocol.

The embedded kernels, the test suite, and any external program all speak to
the coordinator the same way: open a TCP connection, send SETORDER, then
exchange one command batch at a time. A batch is answered by one response
frame holding a status per command (plus a result command after each
successful get), except that a batch containing SIMSTEP is answered only when
the step barrier releases.
"""

from __future__ import annotations

import socket

from . import wire
from .wire import (
    OrderRejected,
    ProtocolError,
    TypedValue,
    WireCommand,
)


class ServerClosed(ProtocolError):
    """The coordinator closed the connection (normal at end of run)."""


class WireClient:
    def __init__(self, host: str, port: int, timeout: float | None = 60.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._buf = b""
        self._server_closed = False
        self.order: int | None = None

    # -- framing --------------------------------------------------------------

    def _read_frame(self) -> list[WireCommand]:
        while True:
            total = wire.frame_length(self._buf)
            if total is not None and len(self._buf) >= total:
                commands, self._buf = wire.decode_message(self._buf)
                if len(commands) == 1 and commands[0].id == wire.CMD_CLOSE:
                    self._server_closed = True
                    raise ServerClosed("server announced end of run")
                return commands
            chunk = self._sock.recv(65536)
            if not chunk:
                raise ServerClosed("server closed the connection")
            self._buf += chunk

    def request(self, commands: list[WireCommand]) -> list[WireCommand]:
        """Send one batch and return the raw response frame."""
        if self._server_closed:
            raise ServerClosed("server already announced end of run")
        self._sock.sendall(wire.encode_message(commands))
        return self._read_frame()

    def _checked(self, commands: list[WireCommand]) -> list[tuple[str, TypedValue | None]]:
        """Send a batch; return (description, result) per command, or raise."""
        reply = self.request(commands)
        out: list[tuple[str, TypedValue | None]] = []
        i = 0
        for sent in commands:
            if i >= len(reply):
                raise ProtocolError(f"response frame too short: {len(reply)} commands")
            code, desc = wire.parse_status(reply[i])
            if reply[i].id != sent.id:
                raise ProtocolError(
                    f"status id 0x{reply[i].id:02x} does not mirror request 0x{sent.id:02x}"
                )
            i += 1
            if code != wire.STATUS_OK:
                raise ProtocolError(f"{wire.COMMAND_NAMES.get(sent.id, hex(sent.id))}: {desc}")
            value = None
            if sent.id in (wire.CMD_GET_VEHICLE, wire.CMD_GET_TLS):
                if i >= len(reply):
                    raise ProtocolError("get succeeded but the result command is missing")
                _, _, value = wire.parse_result(reply[i])
                i += 1
            out.append((desc, value))
        if i == len(reply) - 1 and reply[i].id == wire.CMD_CLOSE:
            # the server tacked its end-of-run announcement onto the last
            # response; honour the responses now, fail the next request
            self._server_closed = True
        elif i != len(reply):
            raise ProtocolError(f"{len(reply) - i} trailing commands in response frame")
        return out

    # -- protocol verbs -------------------------------------------------------

    def handshake(self, order: int) -> None:
        if order < 1:
            raise ValueError(f"client order must be >= 1, got {order}")
        reply = self.request([wire.setorder(order)])
        if len(reply) != 1:
            raise ProtocolError(f"handshake expected one status, got {len(reply)} commands")
        code, desc = wire.parse_status(reply[0])
        if code != wire.STATUS_OK:
            raise OrderRejected(desc)
        self.order = order

    def step(self, target_time_s: float = 0.0) -> None:
        """Vote for the next step; returns when the barrier releases."""
        self.step_request(target_time_s)
        self.step_wait()

    def step_request(self, target_time_s: float = 0.0) -> None:
        """Send the step vote without waiting for the barrier.

        Lets one thread drive several connections: vote on all of them,
        then collect the releases with step_wait. Nothing else may be
        sent on this connection until the wait completes.
        """
        if self._server_closed:
            raise ServerClosed("server already announced end of run")
        self._sock.sendall(wire.encode_message([wire.simstep(target_time_s)]))

    def step_wait(self) -> None:
        reply = self._read_frame()
        if not reply or reply[0].id != wire.CMD_SIMSTEP:
            raise ProtocolError("expected a step status")
        code, desc = wire.parse_status(reply[0])
        if code != wire.STATUS_OK:
            raise ProtocolError(f"SIMSTEP: {desc}")
        if len(reply) == 2 and reply[1].id == wire.CMD_CLOSE:
            self._server_closed = True
        elif len(reply) != 1:
            raise ProtocolError(f"{len(reply) - 1} trailing commands in step response")

    def vehicle_ids(self) -> tuple[str, ...]:
        (_, value), = self._checked(
            [wire.get_command(wire.CMD_GET_VEHICLE, wire.VAR_ID_LIST, "")]
        )
        assert value is not None
        return value.value  # type: ignore[return-value]

    def get_vehicle(self, variable: int, vehicle_id: str) -> TypedValue:
        (_, value), = self._checked(
            [wire.get_command(wire.CMD_GET_VEHICLE, variable, vehicle_id)]
        )
        assert value is not None
        return value

    def get_vehicles(self, requests: list[tuple[int, str]]) -> list[TypedValue]:
        """Batched vehicle gets: one frame out, one frame back."""
        if not requests:
            return []
        batch = [wire.get_command(wire.CMD_GET_VEHICLE, var, obj) for var, obj in requests]
        return [v for _, v in self._checked(batch) if v is not None]

    def position(self, vehicle_id: str) -> tuple[float, float]:
        return self.get_vehicle(wire.VAR_POSITION, vehicle_id).value  # type: ignore[return-value]

    def speed(self, vehicle_id: str) -> float:
        return self.get_vehicle(wire.VAR_SPEED, vehicle_id).value  # type: ignore[return-value]

    def angle(self, vehicle_id: str) -> float:
        return self.get_vehicle(wire.VAR_ANGLE, vehicle_id).value  # type: ignore[return-value]

    def set_speed(self, vehicle_id: str, speed: float) -> None:
        self._checked(
            [
                wire.set_command(
                    wire.CMD_SET_VEHICLE,
                    wire.VAR_SPEED,
                    vehicle_id,
                    TypedValue(wire.TYPE_DOUBLE, speed),
                )
            ]
        )

    def tls_state(self, tls_id: str) -> str:
        (_, value), = self._checked(
            [wire.get_command(wire.CMD_GET_TLS, wire.VAR_TLS_STATE, tls_id)]
        )
        assert value is not None
        return value.value  # type: ignore[return-value]

    def set_tls_state(self, tls_id: str, state: str) -> None:
        self._checked(
            [
                wire.set_command(
                    wire.CMD_SET_TLS,
                    wire.VAR_TLS_STATE,
                    tls_id,
                    TypedValue(wire.TYPE_STRING, state),
                )
            ]
        )

    def close(self) -> None:
        """Announce a clean end of run; tolerates a server already gone."""
        try:
            self.request([wire.close()])
        except (ServerClosed, OSError):
            pass
        self._sock.close()

    def abort(self) -> None:
        self._sock.close()
