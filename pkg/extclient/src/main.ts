/**
 * Trajectory logger: join a running coordinator, read every vehicle's
 * position each round, vote, and write the rows as CSV on clean close.
 *
 *   node dist/main.js --port 9999 [--host 127.0.0.1] [--order 3] [--out client.csv]
 */

import fs from "fs";
import { CosimClient, ServerClosedError } from "./client";

interface Args {
  host: string;
  port: number;
  order: number;
  out: string;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { host: "127.0.0.1", port: 0, order: 3, out: "client.csv" };
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${flag}`);
    switch (flag) {
      case "--host": args.host = value; break;
      case "--port": args.port = Number(value); break;
      case "--order": args.order = Number(value); break;
      case "--out": args.out = value; break;
      default: throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!Number.isInteger(args.port) || args.port <= 0) {
    throw new Error("--port is required");
  }
  return args;
}

async function main(): Promise<number> {
  const args = parseArgs(process.argv.slice(2));
  const client = await CosimClient.connect(args.host, args.port);
  await client.handshake(args.order);
  console.error(`joined as order ${args.order} on port ${args.port}`);

  const rows: string[] = ["step,id,x,y"];
  let step = 0;
  try {
    for (;;) {
      const ids = await client.vehicleIds();
      const positions = await client.positions(ids);
      for (let i = 0; i < ids.length; i += 1) {
        const [x, y] = positions[i];
        rows.push(`${step},${ids[i]},${x},${y}`);
      }
      await client.step();
      step += 1;
    }
  } catch (err) {
    if (!(err instanceof ServerClosedError)) throw err;
  } finally {
    client.destroy();
  }

  fs.writeFileSync(args.out, rows.join("\n") + "\n");
  console.error(`run over after ${step} rounds; ${rows.length - 1} rows in ${args.out}`);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(String(err));
    process.exit(1);
  },
);
