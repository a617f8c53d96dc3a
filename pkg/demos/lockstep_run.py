"""Two clients, one clock: drive the coordinator over loopback TCP.

Client 1 reads the world each round; client 2 drags its feet on round 5
for half a second and everyone waits. Run: python3 demos/lockstep_run.py
"""

import tempfile
import threading
import time
from pathlib import Path

from deskcosim import (
    Coordinator,
    DemandEntry,
    Edge,
    Junction,
    RoadNetwork,
    ScenarioBundle,
    VehicleType,
    WireClient,
)


def tiny_bundle() -> ScenarioBundle:
    car = VehicleType("car")
    network = RoadNetwork(
        {"J0": Junction("J0", 0.0, 0.0), "J1": Junction("J1", 300.0, 0.0)},
        {"E0": Edge("E0", "J0", "J1", 300.0, 13.9)},
        [],
    )
    return ScenarioBundle(
        network=network,
        vtypes={"car": car},
        demand=(DemandEntry("veh0", car, ("E0",), depart_us=0),),
        polygons=(),
        tls={},
        end_s=1.0,
        seed=1,
    )


def follower(port: int) -> None:
    client = WireClient("127.0.0.1", port)
    client.handshake(2)
    for k in range(10):
        if k == 5:
            time.sleep(0.5)
        client.step()
    client.abort()


def main() -> None:
    out = Path(tempfile.mkdtemp(prefix="lockstep-"))
    coord = Coordinator(
        tiny_bundle(), expected_clients=2, seed=1, out_dir=out, port=0
    )
    server = threading.Thread(target=coord.serve, daemon=True)
    server.start()
    print(f"coordinator on port {coord.port}, logs in {out}\n")

    worker = threading.Thread(target=follower, args=(coord.port,))
    worker.start()

    client = WireClient("127.0.0.1", coord.port)
    client.handshake(1)
    client.step()  # round 0 inserts veh0; nothing to read yet
    for k in range(1, 10):
        speed = client.speed("veh0")
        started = time.perf_counter()
        client.step()
        waited = time.perf_counter() - started
        note = "  <- held at the barrier by client 2" if waited > 0.25 else ""
        print(f"round {k}: veh0 at {speed:5.2f} m/s, vote returned in {waited * 1e3:6.1f} ms{note}")
    client.abort()

    worker.join()
    server.join(timeout=5.0)
    print(f"\ncoordinator exit code {coord.exit_code}; event log tail:")
    for line in (out / "events.log").read_text().splitlines()[-4:]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
