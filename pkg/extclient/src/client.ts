/**
 * Promise-flavoured client for the lockstep coordinator.
 *
 * The protocol is strictly request/response on one socket, so a single
 * pending-reply slot is enough; concurrent requests are a caller bug
 * and rejected outright.
 */

import net from "net";
import * as wire from "./wire";

export class ServerClosedError extends Error {
  constructor() {
    super("server announced end of run");
  }
}

export class CosimClient {
  private socket: net.Socket;
  private buf: Buffer = Buffer.alloc(0);
  private pending: { resolve: (cmds: wire.Command[]) => void; reject: (err: Error) => void } | null = null;
  private closed = false;
  private failure: Error | null = null;

  private constructor(socket: net.Socket) {
    this.socket = socket;
    socket.on("data", (chunk: Buffer) => this.onData(chunk));
    socket.on("error", (err) => this.fail(err));
    socket.on("close", () => this.fail(new ServerClosedError()));
  }

  static connect(host: string, port: number): Promise<CosimClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port, noDelay: true }, () => {
        socket.off("error", reject);
        resolve(new CosimClient(socket));
      });
      socket.once("error", reject);
    });
  }

  private fail(err: Error): void {
    if (this.failure === null) this.failure = err;
    if (this.pending) {
      const waiter = this.pending;
      this.pending = null;
      waiter.reject(err);
    }
  }

  private onData(chunk: Buffer): void {
    this.buf = Buffer.concat([this.buf, chunk]);
    for (;;) {
      let total: number | null;
      try {
        total = wire.frameLength(this.buf);
      } catch (err) {
        this.fail(err as Error);
        return;
      }
      if (total === null || this.buf.length < total) return;
      let frame: { commands: wire.Command[]; rest: Buffer };
      try {
        frame = wire.decodeMessage(this.buf);
      } catch (err) {
        this.fail(err as Error);
        return;
      }
      this.buf = frame.rest;
      this.deliver(frame.commands);
    }
  }

  private deliver(commands: wire.Command[]): void {
    if (commands.length === 1 && commands[0].id === wire.CMD_CLOSE) {
      this.fail(new ServerClosedError());
      return;
    }
    // A trailing CLOSE rides on the last response of the run: honour
    // the response now, fail whatever comes after.
    const last = commands[commands.length - 1];
    if (commands.length > 1 && last.id === wire.CMD_CLOSE) {
      this.closed = true;
      commands = commands.slice(0, -1);
    }
    const waiter = this.pending;
    if (waiter === null) return; // unsolicited frame after our teardown
    this.pending = null;
    waiter.resolve(commands);
  }

  private request(commands: wire.Command[]): Promise<wire.Command[]> {
    if (this.failure) return Promise.reject(this.failure);
    if (this.closed) return Promise.reject(new ServerClosedError());
    if (this.pending) return Promise.reject(new Error("a request is already in flight"));
    return new Promise((resolve, reject) => {
      this.pending = { resolve, reject };
      this.socket.write(wire.encodeMessage(commands));
    });
  }

  private async checked(commands: wire.Command[]): Promise<wire.Command[]> {
    const reply = await this.request(commands);
    let i = 0;
    const results: wire.Command[] = [];
    for (const sent of commands) {
      const status = reply[i];
      if (status === undefined || status.id !== sent.id) {
        throw new Error(`response ${i} does not mirror request id 0x${sent.id.toString(16)}`);
      }
      const { code, description } = wire.parseStatus(status);
      if (code !== wire.STATUS_OK) {
        throw new Error(`command 0x${sent.id.toString(16)} failed: ${description}`);
      }
      i += 1;
      if (sent.id === wire.CMD_GET_VEHICLE || sent.id === wire.CMD_GET_TLS) {
        const result = reply[i];
        if (result === undefined) throw new Error("get succeeded without a result");
        results.push(result);
        i += 1;
      }
    }
    return results;
  }

  async handshake(order: number): Promise<void> {
    await this.checked([wire.setorder(order)]);
  }

  async vehicleIds(): Promise<string[]> {
    const [result] = await this.checked([
      wire.getCommand(wire.CMD_GET_VEHICLE, wire.VAR_ID_LIST, ""),
    ]);
    const { value } = wire.parseResult(result);
    if (value.tag !== wire.TYPE_STRINGLIST) throw new Error("id list has the wrong type");
    return value.value;
  }

  /** One batched position read per vehicle, in the order given. */
  async positions(ids: string[]): Promise<Array<[number, number]>> {
    if (ids.length === 0) return [];
    const results = await this.checked(
      ids.map((id) => wire.getCommand(wire.CMD_GET_VEHICLE, wire.VAR_POSITION, id)),
    );
    return results.map((cmd) => {
      const { value } = wire.parseResult(cmd);
      if (value.tag !== wire.TYPE_POSITION) throw new Error("position has the wrong type");
      return value.value;
    });
  }

  /** Vote for the next step; resolves when the barrier releases. */
  async step(targetTimeS = 0.0): Promise<void> {
    const reply = await this.request([wire.simstep(targetTimeS)]);
    const { code, description } = wire.parseStatus(reply[0]);
    if (code !== wire.STATUS_OK) throw new Error(`step rejected: ${description}`);
  }

  destroy(): void {
    this.socket.destroy();
  }
}
