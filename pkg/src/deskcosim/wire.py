"""Binary wire codec for the coordinator protocol.

Everything on the wire is big-endian. A message is one length-prefixed frame
holding zero or more commands:

    message   := total_length:u32 command*        (total_length counts itself)
    command   := len:u8 id:u8 payload             (len counts len+id+payload)
              |  0x00 ext_len:u32 id:u8 payload   (ext_len counts the marker,
                                                   itself, id and payload)

The extended form is used only when the encoded command would not fit in a
single length byte. Get/set payloads carry tagged values; SETORDER and SIMSTEP
carry raw untagged payloads (int32 order, float64 target time). A status
response reuses the id of the command it answers: payload is a raw result code
byte (0x00 ok, 0xFF error) followed by a raw string description.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAX_FRAME = 16 * 1024 * 1024  # refuse anything larger in either direction

# Command ids (TraCI subset).
CMD_SIMSTEP = 0x02
CMD_SETORDER = 0x03
CMD_CLOSE = 0x7F
CMD_GET_TLS = 0xA2
CMD_GET_VEHICLE = 0xA4
CMD_SET_TLS = 0xC2
CMD_SET_VEHICLE = 0xC4

REGISTERED_COMMANDS = frozenset(
    {
        CMD_SIMSTEP,
        CMD_SETORDER,
        CMD_CLOSE,
        CMD_GET_TLS,
        CMD_GET_VEHICLE,
        CMD_SET_TLS,
        CMD_SET_VEHICLE,
    }
)

COMMAND_NAMES = {
    CMD_SIMSTEP: "SIMSTEP",
    CMD_SETORDER: "SETORDER",
    CMD_CLOSE: "CLOSE",
    CMD_GET_TLS: "GET_TLS",
    CMD_GET_VEHICLE: "GET_VEHICLE",
    CMD_SET_TLS: "SET_TLS",
    CMD_SET_VEHICLE: "SET_VEHICLE",
}

# Variable ids used by the get/set commands.
VAR_ID_LIST = 0x00
VAR_TLS_STATE = 0x20
VAR_SPEED = 0x40
VAR_POSITION = 0x42
VAR_ANGLE = 0x43

# Value type tags.
TYPE_POSITION = 0x01
TYPE_UBYTE = 0x07
TYPE_INT = 0x09
TYPE_DOUBLE = 0x0B
TYPE_STRING = 0x0C
TYPE_STRINGLIST = 0x0E
TYPE_COMPOUND = 0x0F

STATUS_OK = 0x00
STATUS_ERR = 0xFF

_U32 = struct.Struct("!I")
_I32 = struct.Struct("!i")
_F64 = struct.Struct("!d")


class ProtocolError(Exception):
    """Base class for every wire-level failure."""


class UnregisteredCommand(ProtocolError):
    pass


class OversizeMessage(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class MalformedCommand(ProtocolError):
    pass


class OrderRejected(ProtocolError):
    """Server refused a SETORDER handshake (duplicate or out-of-range)."""


@dataclass(frozen=True)
class WireCommand:
    id: int
    payload: bytes = b""


@dataclass(frozen=True)
class TypedValue:
    tag: int
    value: object


# -- raw scalar packing -------------------------------------------------------


def pack_ubyte(v: int) -> bytes:
    if not 0 <= v <= 0xFF:
        raise ValueError(f"ubyte out of range: {v}")
    return bytes((v,))


def pack_int(v: int) -> bytes:
    return _I32.pack(v)


def pack_double(v: float) -> bytes:
    return _F64.pack(v)


def pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def read_ubyte(buf: bytes, off: int) -> tuple[int, int]:
    _need(buf, off, 1)
    return buf[off], off + 1


def read_int(buf: bytes, off: int) -> tuple[int, int]:
    _need(buf, off, 4)
    return _I32.unpack_from(buf, off)[0], off + 4


def read_double(buf: bytes, off: int) -> tuple[float, int]:
    _need(buf, off, 8)
    return _F64.unpack_from(buf, off)[0], off + 8


def read_string(buf: bytes, off: int) -> tuple[str, int]:
    n, off = _read_u32(buf, off)
    _need(buf, off, n)
    try:
        s = buf[off : off + n].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedCommand(f"invalid utf-8 in string field: {exc}") from None
    return s, off + n


def _read_u32(buf: bytes, off: int) -> tuple[int, int]:
    _need(buf, off, 4)
    return _U32.unpack_from(buf, off)[0], off + 4


def _need(buf: bytes, off: int, n: int) -> None:
    if off + n > len(buf):
        raise MalformedCommand(
            f"payload ends early: need {n} bytes at offset {off}, have {len(buf) - off}"
        )


# -- tagged values ------------------------------------------------------------


def pack_value(tv: TypedValue) -> bytes:
    tag, v = tv.tag, tv.value
    if tag == TYPE_UBYTE:
        return pack_ubyte(tag) + pack_ubyte(v)  # type: ignore[arg-type]
    if tag == TYPE_INT:
        return pack_ubyte(tag) + pack_int(v)  # type: ignore[arg-type]
    if tag == TYPE_DOUBLE:
        return pack_ubyte(tag) + pack_double(v)  # type: ignore[arg-type]
    if tag == TYPE_STRING:
        return pack_ubyte(tag) + pack_string(v)  # type: ignore[arg-type]
    if tag == TYPE_POSITION:
        x, y = v  # type: ignore[misc]
        return pack_ubyte(tag) + pack_double(x) + pack_double(y)
    if tag == TYPE_STRINGLIST:
        parts = [pack_string(s) for s in v]  # type: ignore[union-attr]
        return pack_ubyte(tag) + _U32.pack(len(parts)) + b"".join(parts)
    if tag == TYPE_COMPOUND:
        parts = [pack_value(item) for item in v]  # type: ignore[union-attr]
        return pack_ubyte(tag) + _U32.pack(len(parts)) + b"".join(parts)
    raise MalformedCommand(f"unknown value tag 0x{tag:02x}")


def read_value(buf: bytes, off: int) -> tuple[TypedValue, int]:
    tag, off = read_ubyte(buf, off)
    if tag == TYPE_UBYTE:
        v, off = read_ubyte(buf, off)
        return TypedValue(tag, v), off
    if tag == TYPE_INT:
        v, off = read_int(buf, off)
        return TypedValue(tag, v), off
    if tag == TYPE_DOUBLE:
        v, off = read_double(buf, off)
        return TypedValue(tag, v), off
    if tag == TYPE_STRING:
        v, off = read_string(buf, off)
        return TypedValue(tag, v), off
    if tag == TYPE_POSITION:
        x, off = read_double(buf, off)
        y, off = read_double(buf, off)
        return TypedValue(tag, (x, y)), off
    if tag == TYPE_STRINGLIST:
        n, off = _read_u32(buf, off)
        items = []
        for _ in range(n):
            s, off = read_string(buf, off)
            items.append(s)
        return TypedValue(tag, tuple(items)), off
    if tag == TYPE_COMPOUND:
        n, off = _read_u32(buf, off)
        values = []
        for _ in range(n):
            tv, off = read_value(buf, off)
            values.append(tv)
        return TypedValue(tag, tuple(values)), off
    raise MalformedCommand(f"unknown value tag 0x{tag:02x}")


# -- framing ------------------------------------------------------------------


def encode_command(cmd: WireCommand) -> bytes:
    if cmd.id not in REGISTERED_COMMANDS:
        raise UnregisteredCommand(f"unknown command id 0x{cmd.id:02x}")
    short = 2 + len(cmd.payload)
    if short <= 0xFF:
        return bytes((short, cmd.id)) + cmd.payload
    ext = 6 + len(cmd.payload)
    return b"\x00" + _U32.pack(ext) + bytes((cmd.id,)) + cmd.payload


def encode_message(commands: list[WireCommand] | tuple[WireCommand, ...]) -> bytes:
    body = b"".join(encode_command(c) for c in commands)
    total = 4 + len(body)
    if total > MAX_FRAME:
        raise OversizeMessage(f"frame of {total} bytes exceeds the {MAX_FRAME} byte cap")
    return _U32.pack(total) + body


def decode_message(buf: bytes) -> tuple[list[WireCommand], bytes]:
    """Decode one frame; surplus bytes come back as the remainder.

    The buffer must hold at least one complete frame (TruncatedFrame
    otherwise); streaming callers should gate on frame_length() first.
    """
    total = frame_length(buf)
    if total is None or len(buf) < total:
        raise TruncatedFrame(
            f"have {len(buf)} bytes, frame needs {total if total else 'at least 4'}"
        )
    commands = []
    off = 4
    while off < total:
        marker = buf[off]
        if marker == 0:
            if off + 5 > total:
                raise MalformedCommand("extended length field runs past the frame")
            ext = _U32.unpack_from(buf, off + 1)[0]
            if ext < 6:
                raise MalformedCommand(f"extended command length {ext} below minimum 6")
            header, size = 5, ext
        else:
            if marker < 2:
                raise MalformedCommand(f"command length {marker} below minimum 2")
            header, size = 1, marker
        if off + size > total:
            raise MalformedCommand(
                f"command of {size} bytes at offset {off} runs past frame end {total}"
            )
        cmd_id = buf[off + header]
        if cmd_id not in REGISTERED_COMMANDS:
            raise MalformedCommand(f"unregistered command id 0x{cmd_id:02x}")
        payload = bytes(buf[off + header + 1 : off + size])
        commands.append(WireCommand(cmd_id, payload))
        off += size
    return commands, bytes(buf[total:])


def frame_length(buf: bytes) -> int | None:
    """Total length of the frame at the head of buf, or None if undecidable yet.

    Raises MalformedCommand for length fields no amount of further bytes could
    repair (below the 4-byte minimum or above the frame cap).
    """
    if len(buf) < 4:
        return None
    total = _U32.unpack_from(buf, 0)[0]
    if total < 4:
        raise MalformedCommand(f"declared frame length {total} below the 4 byte minimum")
    if total > MAX_FRAME:
        raise MalformedCommand(f"declared frame length {total} exceeds the {MAX_FRAME} byte cap")
    return total


# -- command payload builders -------------------------------------------------


def setorder(order: int) -> WireCommand:
    return WireCommand(CMD_SETORDER, pack_int(order))


def simstep(target_time_s: float = 0.0) -> WireCommand:
    return WireCommand(CMD_SIMSTEP, pack_double(target_time_s))


def close() -> WireCommand:
    return WireCommand(CMD_CLOSE)


def get_command(cmd_id: int, variable: int, object_id: str) -> WireCommand:
    return WireCommand(cmd_id, pack_ubyte(variable) + pack_string(object_id))


def set_command(cmd_id: int, variable: int, object_id: str, value: TypedValue) -> WireCommand:
    return WireCommand(cmd_id, pack_ubyte(variable) + pack_string(object_id) + pack_value(value))


def status(request_id: int, code: int, description: str = "") -> WireCommand:
    if code == STATUS_ERR and not description:
        raise ValueError("error status needs a non-empty description")
    return WireCommand(request_id, pack_ubyte(code) + pack_string(description))


def result(request_id: int, variable: int, object_id: str, value: TypedValue) -> WireCommand:
    return WireCommand(
        request_id, pack_ubyte(variable) + pack_string(object_id) + pack_value(value)
    )


def parse_status(cmd: WireCommand) -> tuple[int, str]:
    code, off = read_ubyte(cmd.payload, 0)
    desc, _ = read_string(cmd.payload, off)
    if code == STATUS_ERR and not desc:
        raise MalformedCommand("error status arrived without a description")
    return code, desc


def parse_get(cmd: WireCommand) -> tuple[int, str]:
    variable, off = read_ubyte(cmd.payload, 0)
    object_id, _ = read_string(cmd.payload, off)
    return variable, object_id


def parse_set(cmd: WireCommand) -> tuple[int, str, TypedValue]:
    variable, off = read_ubyte(cmd.payload, 0)
    object_id, off = read_string(cmd.payload, off)
    value, _ = read_value(cmd.payload, off)
    return variable, object_id, value


def parse_result(cmd: WireCommand) -> tuple[int, str, TypedValue]:
    return parse_set(cmd)
