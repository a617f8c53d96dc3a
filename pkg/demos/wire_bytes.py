"""Frame anatomy: what a command batch looks like on the socket.

Run: python3 demos/wire_bytes.py
"""

from deskcosim import wire


def hexdump(blob: bytes) -> str:
    return " ".join(f"{b:02x}" for b in blob)


def main() -> None:
    print("A join message is one SETORDER command inside a length-prefixed frame:")
    frame = wire.encode_message([wire.setorder(2)])
    print(f"  {hexdump(frame)}")
    print("  u32 total length, then per command: u8 length | u8 id | payload\n")

    print("Several commands ride in one frame and are answered in one frame:")
    batch = [
        wire.get_command(wire.CMD_GET_VEHICLE, wire.VAR_SPEED, "veh0"),
        wire.set_command(
            wire.CMD_SET_VEHICLE, wire.VAR_SPEED, "veh0",
            wire.TypedValue(wire.TYPE_DOUBLE, 7.5),
        ),
        wire.simstep(),
    ]
    frame = wire.encode_message(batch)
    print(f"  {len(batch)} commands -> {len(frame)} bytes")
    print(f"  {hexdump(frame)}\n")

    decoded, rest = wire.decode_message(frame)
    assert rest == b""
    for cmd in decoded:
        print(f"  id=0x{cmd.id:02X} {wire.COMMAND_NAMES[cmd.id]:<12} payload={len(cmd.payload)} bytes")

    print("\nPayloads past 249 bytes switch to the extended length form")
    print("(length byte 0x00, then a u32):")
    big = wire.WireCommand(wire.CMD_SET_VEHICLE, bytes(300))
    encoded = wire.encode_command(big)
    print(f"  header bytes: {hexdump(encoded[:6])} ... ({len(encoded)} total)")


if __name__ == "__main__":
    main()
