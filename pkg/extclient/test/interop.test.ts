/**
 * Live tests against the Python coordinator: `python3 -m deskcosim` must
 * be importable (pip install -e .. from the repository root) and the
 * client compiled to dist/ (the npm test script does this).
 */

import { spawn, ChildProcess } from "child_process";
import fs from "fs";
import os from "os";
import path from "path";
import readline from "readline";
import { afterEach, describe, expect, it } from "vitest";

const REPO = path.resolve(__dirname, "..", "..");
const SCENARIO = path.join(REPO, "scenarios", "corridor", "corridor.sumocfg");
const CLIENT = path.join(REPO, "extclient", "dist", "main.js");

let procs: ChildProcess[] = [];

function launchRun(outDir: string, extra: string[] = []): ChildProcess {
  const proc = spawn("python3", [
    "-m", "deskcosim", "run", SCENARIO,
    "--clients", "3", "--port", "0", "--out", outDir, ...extra,
  ]);
  procs.push(proc);
  return proc;
}

function firstLine(proc: ChildProcess): Promise<string> {
  const rl = readline.createInterface({ input: proc.stdout! });
  return new Promise((resolve, reject) => {
    rl.once("line", (line) => resolve(line));
    proc.once("exit", (code) => reject(new Error(`exited ${code} before printing`)));
  });
}

function exitCode(proc: ChildProcess): Promise<number | null> {
  return new Promise((resolve) => proc.once("exit", (code) => resolve(code)));
}

function launchClient(port: number, out: string): ChildProcess {
  const proc = spawn("node", [CLIENT, "--port", String(port), "--out", out]);
  procs.push(proc);
  return proc;
}

afterEach(() => {
  for (const proc of procs) proc.kill("SIGKILL");
  procs = [];
});

describe("against the live coordinator", () => {
  it("logs 100 rounds that match the coordinator's trajectory file", async () => {
    const work = fs.mkdtempSync(path.join(os.tmpdir(), "interop-"));
    const outDir = path.join(work, "out");
    const clientCsv = path.join(work, "client.csv");

    const run = launchRun(outDir);
    const port = Number((await firstLine(run)).replace("PORT=", ""));
    expect(port).toBeGreaterThan(0);

    const client = launchClient(port, clientCsv);
    expect(await exitCode(client)).toBe(0);
    expect(await exitCode(run)).toBe(0);

    const theirs = fs
      .readFileSync(path.join(outDir, "trajectories.csv"), "utf-8")
      .trim().split("\n").slice(1);
    const ours = fs.readFileSync(clientCsv, "utf-8").trim().split("\n").slice(1);
    expect(ours.length).toBe(theirs.length);
    expect(ours.length).toBeGreaterThan(90);

    for (let i = 0; i < theirs.length; i += 1) {
      // theirs: step,time_s,id,edge,lane_pos,x,y,speed,owner
      const t = theirs[i].split(",");
      const o = ours[i].split(",");
      expect([o[0], o[1]]).toEqual([t[0], t[2]]);
      expect(Number(o[2])).toBe(Number(t[5]));
      expect(Number(o[3])).toBe(Number(t[6]));
    }
  }, 30_000);

  it("a killed client takes the whole run down with a nonzero exit", async () => {
    const work = fs.mkdtempSync(path.join(os.tmpdir(), "interop-"));
    const run = launchRun(path.join(work, "out"), ["--end", "3600"]);
    const port = Number((await firstLine(run)).replace("PORT=", ""));

    const client = launchClient(port, path.join(work, "client.csv"));
    await new Promise((resolve) => setTimeout(resolve, 500));
    expect(client.exitCode).toBeNull(); // still mid-run
    client.kill("SIGKILL");

    expect(await exitCode(run)).not.toBe(0);
    const log = fs.readFileSync(path.join(work, "out", "events.log"), "utf-8");
    expect(log).toMatch(/run-end reason=eof-truncation client=\d+ exit=2/);
  }, 30_000);
});
