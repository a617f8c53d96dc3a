/**
 * Binary codec for the coordinator's wire protocol.
 *
 * Frames are big-endian: a u32 total length (counting itself), then
 * commands. Each command is either `len:u8 | id:u8 | payload` or, when
 * the short form cannot hold it, `0x00 | len:u32 | id:u8 | payload`
 * with the length counting every header byte.
 */

export const CMD_SIMSTEP = 0x02;
export const CMD_SETORDER = 0x03;
export const CMD_CLOSE = 0x7f;
export const CMD_GET_TLS = 0xa2;
export const CMD_GET_VEHICLE = 0xa4;
export const CMD_SET_TLS = 0xc2;
export const CMD_SET_VEHICLE = 0xc4;

export const VAR_ID_LIST = 0x00;
export const VAR_TLS_STATE = 0x20;
export const VAR_SPEED = 0x40;
export const VAR_POSITION = 0x42;
export const VAR_ANGLE = 0x43;

export const TYPE_POSITION = 0x01;
export const TYPE_UBYTE = 0x07;
export const TYPE_INT = 0x09;
export const TYPE_DOUBLE = 0x0b;
export const TYPE_STRING = 0x0c;
export const TYPE_STRINGLIST = 0x0e;
export const TYPE_COMPOUND = 0x0f;

export const STATUS_OK = 0x00;
export const STATUS_ERR = 0xff;

export const MAX_FRAME = 16 * 1024 * 1024;

const KNOWN_IDS = new Set([
  CMD_SIMSTEP, CMD_SETORDER, CMD_CLOSE,
  CMD_GET_TLS, CMD_GET_VEHICLE, CMD_SET_TLS, CMD_SET_VEHICLE,
]);

export interface Command {
  id: number;
  payload: Buffer;
}

export type Value =
  | { tag: typeof TYPE_UBYTE | typeof TYPE_INT; value: number }
  | { tag: typeof TYPE_DOUBLE; value: number }
  | { tag: typeof TYPE_STRING; value: string }
  | { tag: typeof TYPE_POSITION; value: [number, number] }
  | { tag: typeof TYPE_STRINGLIST; value: string[] };

export class WireError extends Error {}

// -- encoding ---------------------------------------------------------

function encodeCommand(cmd: Command): Buffer {
  const short = 2 + cmd.payload.length;
  if (short <= 0xff) {
    return Buffer.concat([Buffer.from([short, cmd.id]), cmd.payload]);
  }
  const header = Buffer.alloc(6);
  header.writeUInt8(0, 0);
  header.writeUInt32BE(6 + cmd.payload.length, 1);
  header.writeUInt8(cmd.id, 5);
  return Buffer.concat([header, cmd.payload]);
}

export function encodeMessage(commands: Command[]): Buffer {
  const body = Buffer.concat(commands.map(encodeCommand));
  if (4 + body.length > MAX_FRAME) {
    throw new WireError(`frame of ${4 + body.length} bytes exceeds the cap`);
  }
  const head = Buffer.alloc(4);
  head.writeUInt32BE(4 + body.length, 0);
  return Buffer.concat([head, body]);
}

function packString(s: string): Buffer {
  const raw = Buffer.from(s, "utf-8");
  const head = Buffer.alloc(4);
  head.writeUInt32BE(raw.length, 0);
  return Buffer.concat([head, raw]);
}

export function setorder(order: number): Command {
  const payload = Buffer.alloc(4);
  payload.writeInt32BE(order, 0);
  return { id: CMD_SETORDER, payload };
}

export function simstep(targetTimeS = 0.0): Command {
  const payload = Buffer.alloc(8);
  payload.writeDoubleBE(targetTimeS, 0);
  return { id: CMD_SIMSTEP, payload };
}

export function getCommand(cmdId: number, variable: number, objectId: string): Command {
  return {
    id: cmdId,
    payload: Buffer.concat([Buffer.from([variable]), packString(objectId)]),
  };
}

// -- decoding ---------------------------------------------------------

/** Total length of the frame at the head of buf, or null if not known yet. */
export function frameLength(buf: Buffer): number | null {
  if (buf.length < 4) return null;
  const total = buf.readUInt32BE(0);
  if (total < 4 || total > MAX_FRAME) {
    throw new WireError(`unrepairable frame length ${total}`);
  }
  return total;
}

/** Decode one complete frame; the caller gates on frameLength first. */
export function decodeMessage(buf: Buffer): { commands: Command[]; rest: Buffer } {
  const total = frameLength(buf);
  if (total === null || buf.length < total) {
    throw new WireError("buffer does not hold a complete frame");
  }
  const commands: Command[] = [];
  let off = 4;
  while (off < total) {
    const marker = buf.readUInt8(off);
    let header: number;
    let size: number;
    if (marker === 0) {
      if (off + 5 > total) throw new WireError("extended length runs past the frame");
      header = 5;
      size = buf.readUInt32BE(off + 1);
      if (size < 6) throw new WireError(`extended command length ${size} below minimum`);
    } else {
      if (marker < 2) throw new WireError(`command length ${marker} below minimum`);
      header = 1;
      size = marker;
    }
    if (off + size > total) throw new WireError("command runs past the frame end");
    const id = buf.readUInt8(off + header);
    if (!KNOWN_IDS.has(id)) throw new WireError(`unregistered command id 0x${id.toString(16)}`);
    commands.push({ id, payload: buf.subarray(off + header + 1, off + size) });
    off += size;
  }
  return { commands, rest: buf.subarray(total) };
}

function readString(buf: Buffer, off: number): [string, number] {
  const n = buf.readUInt32BE(off);
  off += 4;
  return [buf.subarray(off, off + n).toString("utf-8"), off + n];
}

export function parseStatus(cmd: Command): { code: number; description: string } {
  const code = cmd.payload.readUInt8(0);
  const [description] = readString(cmd.payload, 1);
  return { code, description };
}

function readValue(buf: Buffer, off: number): [Value, number] {
  const tag = buf.readUInt8(off);
  off += 1;
  switch (tag) {
    case TYPE_UBYTE:
      return [{ tag, value: buf.readUInt8(off) }, off + 1];
    case TYPE_INT:
      return [{ tag, value: buf.readInt32BE(off) }, off + 4];
    case TYPE_DOUBLE:
      return [{ tag, value: buf.readDoubleBE(off) }, off + 8];
    case TYPE_STRING: {
      const [s, end] = readString(buf, off);
      return [{ tag, value: s }, end];
    }
    case TYPE_POSITION: {
      const x = buf.readDoubleBE(off);
      const y = buf.readDoubleBE(off + 8);
      return [{ tag, value: [x, y] }, off + 16];
    }
    case TYPE_STRINGLIST: {
      const n = buf.readUInt32BE(off);
      off += 4;
      const items: string[] = [];
      for (let i = 0; i < n; i += 1) {
        const [s, end] = readString(buf, off);
        items.push(s);
        off = end;
      }
      return [{ tag, value: items }, off];
    }
    default:
      throw new WireError(`value tag 0x${tag.toString(16)} not supported here`);
  }
}

export function parseResult(cmd: Command): { variable: number; objectId: string; value: Value } {
  const variable = cmd.payload.readUInt8(0);
  const [objectId, off] = readString(cmd.payload, 1);
  const [value] = readValue(cmd.payload, off);
  return { variable, objectId, value };
}
