"""Command line front end: validate scenarios, run co-simulations.

`run` starts the coordinator plus the two embedded clients (radio on
order 1, ego control on order 2) over loopback, or just the coordinator
with --server-only. `validate` parses and integrity-checks a scenario
without running it. Everything a run produces lands in one out
directory: events.log, trajectories.csv, packets.csv, ego.csv,
result.sca, result.vec, manifest.json.
"""

from __future__ import annotations

import argparse
import os
import sys
import threading
import time
from pathlib import Path

from .clients import EgoClientLoop, RadioClientLoop
from .coordinator import EXIT_FAULT, Coordinator, CoordinatorError
from .ego import EgoConfig
from .radio import RadioError, RadioMailbox, load_attack_config
from .results import ResultStore, write_manifest
from .scenario import ScenarioBundle, ScenarioError, parse_sumocfg, validate_bundle


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    val = sub.add_parser("validate", help="parse and integrity-check a scenario")
    val.add_argument("config", help="path to the .sumocfg scenario file")

    run = sub.add_parser("run", help="run a co-simulation")
    run.add_argument("config", help="path to the .sumocfg scenario file")
    run.add_argument("--clients", type=int, default=2,
                     help="barrier size; above 2 admits external clients (default 2)")
    run.add_argument("--step-length", type=float, default=None,
                     help="override the scenario step length in seconds")
    run.add_argument("--end", type=float, default=None,
                     help="override the scenario end time in seconds")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario random seed")
    run.add_argument("--port", type=int, default=9999,
                     help="listening port; 0 picks a free one and prints PORT=n")
    run.add_argument("--connect-timeout", type=float, default=30.0,
                     help="seconds to wait for the barrier to staff (default 30)")
    run.add_argument("--tls-manager", choices=("traffic", "ego"), default="traffic",
                     help="who owns traffic light programs during the run")
    run.add_argument("--ego-ids", default="",
                     help="comma-separated vehicle ids claimed by the ego client")
    run.add_argument("--radio", choices=("on", "off"), default="on",
                     help="enable or disable the radio medium client")
    run.add_argument("--attack", default=None, metavar="FILE",
                     help="JSON attack configuration for the radio client")
    run.add_argument("--out", default=None, metavar="DIR",
                     help="output directory (default $COSIM_OUT, then ./out)")
    run.add_argument("--server-only", action="store_true",
                     help="run only the coordinator; all clients are external")
    run.add_argument("--sensor-range", type=float, default=30.0,
                     help="ego sensor range in meters (default 30)")
    run.add_argument("--ttc-threshold", type=float, default=2.5,
                     help="time-to-collision alarm threshold in seconds (default 2.5)")
    run.add_argument("--comfortable-decel", type=float, default=3.0,
                     help="caution-zone braking rate in m/s^2 (default 3)")
    run.add_argument("--emergency-decel", type=float, default=9.0,
                     help="alarm braking rate in m/s^2 (default 9)")
    run.add_argument("--hold-clearance", type=float, default=30.0,
                     help="standstill caution floor in meters (default 30)")
    return parser


def _load_bundle(args) -> ScenarioBundle:
    bundle = parse_sumocfg(args.config)
    if getattr(args, "step_length", None) is not None:
        bundle.step_length_s = args.step_length
    if getattr(args, "end", None) is not None:
        bundle.end_s = args.end
    if getattr(args, "seed", None) is not None:
        bundle.seed = args.seed
    validate_bundle(bundle)
    return bundle


def cmd_validate(args) -> int:
    try:
        bundle = parse_sumocfg(args.config)
    except ScenarioError as exc:
        print(f"INVALID: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    counts = bundle.counts()
    print(f"OK: {args.config}")
    for name in sorted(counts):
        print(f"  {name}: {counts[name]}")
    print(f"  step_length_s: {bundle.step_length_s}")
    print(f"  end_s: {bundle.end_s if bundle.end_s is not None else 'unset'}")
    return 0


def cmd_run(args) -> int:
    try:
        bundle = _load_bundle(args)
    except ScenarioError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        attacks = load_attack_config(args.attack) if args.attack else ()
    except RadioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ego_ids = tuple(part for part in args.ego_ids.split(",") if part)
    embedded = not args.server_only
    if embedded and args.clients < 2:
        print("error: embedded clients occupy orders 1 and 2; "
              "use --clients >= 2 or --server-only", file=sys.stderr)
        return 2
    if embedded and bundle.end_s is None:
        print("error: an embedded run needs an end time "
              "(set time/end in the config or pass --end)", file=sys.stderr)
        return 2
    out_dir = Path(args.out or os.environ.get("COSIM_OUT") or "out")

    started = time.monotonic()
    try:
        coordinator = Coordinator(
            bundle,
            expected_clients=args.clients,
            seed=bundle.seed,
            out_dir=out_dir,
            port=args.port,
            connect_timeout_s=args.connect_timeout,
            tls_manager=args.tls_manager,
            ego_ids=ego_ids,
        )
    except CoordinatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.port == 0:
        print(f"PORT={coordinator.port}", flush=True)

    mailbox = RadioMailbox()
    radio = RadioClientLoop(
        host="127.0.0.1",
        port=coordinator.port,
        bundle=bundle,
        seed=bundle.seed,
        mailbox=mailbox,
        enabled=args.radio == "on",
        attacks=attacks,
    )
    ego = EgoClientLoop(
        host="127.0.0.1",
        port=coordinator.port,
        bundle=bundle,
        config=EgoConfig(
            vehicle_ids=ego_ids,
            sensor_range_m=args.sensor_range,
            ttc_threshold_s=args.ttc_threshold,
            comfortable_decel=args.comfortable_decel,
            emergency_decel=args.emergency_decel,
            hold_clearance_m=args.hold_clearance,
            tls_manager=args.tls_manager,
        ),
        mailbox=mailbox,
    )
    threads = []
    if embedded:
        threads = [
            threading.Thread(target=radio.run, name="radio-client", daemon=True),
            threading.Thread(target=ego.run, name="ego-client", daemon=True),
        ]
        for thread in threads:
            thread.start()

    code = coordinator.serve()
    for thread in threads:
        thread.join(timeout=30.0)
    for loop in (radio, ego):
        if loop.error is not None:
            print(f"error: embedded client failed: {loop.error!r}", file=sys.stderr)
            code = code or EXIT_FAULT

    _write_run_outputs(args, bundle, coordinator, radio, ego, out_dir,
                       time.monotonic() - started, code)
    return code


def _write_run_outputs(args, bundle, coordinator, radio, ego, out_dir, wall_s, code):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "packets.csv").write_text(
        "".join(line + "\n" for line in radio.rows), encoding="utf-8"
    )
    (out_dir / "ego.csv").write_text(
        "".join(line + "\n" for line in ego.rows), encoding="utf-8"
    )

    store = ResultStore()
    store.add_scalar("run", "exit_code", code)
    store.add_scalar("run", "steps", coordinator.step_index)
    store.add_scalar("world", "vehicles_inserted", coordinator.world.inserted_count)
    store.add_scalar("world", "vehicles_arrived", coordinator.world.arrived_count)
    store.add_scalar("world", "collisions", coordinator.collision_count)
    store.add_scalar("radio", "frames_sent", radio.frames_sent)
    store.add_scalar("radio", "frames_received", radio.frames_received)
    store.add_scalar("radio", "frames_lost", radio.frames_lost)
    store.add_scalar("radio", "frames_attack", radio.frames_attack)
    store.add_scalar("ego", "braking_sensor", ego.trigger_counts.get("sensor", 0))
    store.add_scalar("ego", "braking_v2x", ego.trigger_counts.get("v2x", 0))
    dt = bundle.step_length_s
    for k, count in enumerate(coordinator.step_vehicle_counts):
        store.append_vector("world", "vehicle_count", (k + 1) * dt, count)
    for vid in sorted(ego.speed_series):
        for t, speed in ego.speed_series[vid]:
            store.append_vector(f"ego.{vid}", "speed", t, speed)
    store.write(out_dir)

    flags = {
        "clients": args.clients,
        "step_length_s": bundle.step_length_s,
        "end_s": bundle.end_s,
        "seed": bundle.seed,
        "port": args.port,
        "connect_timeout_s": args.connect_timeout,
        "tls_manager": args.tls_manager,
        "ego_ids": list(args.ego_ids.split(",") if args.ego_ids else []),
        "radio": args.radio,
        "attack": args.attack,
        "server_only": args.server_only,
        "sensor_range_m": args.sensor_range,
        "ttc_threshold_s": args.ttc_threshold,
        "comfortable_decel": args.comfortable_decel,
        "emergency_decel": args.emergency_decel,
        "hold_clearance_m": args.hold_clearance,
    }
    inputs = {path.name: path for path in bundle.input_files}
    write_manifest(out_dir, flags, bundle.seed, inputs, wall_s)


def run_simulation(argv: list[str]) -> int:
    """Programmatic entry point: `argv` as for the `run` subcommand."""
    args = build_parser().parse_args(["run", *argv])
    return cmd_run(args)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
