"""Forward collision warning with and without the radio.

The bundled scenario hides a red light behind a warehouse; the lead car
stops, the ego approaches blind. With the radio on, the lead's broadcast
reaches the ego through the building well before its own sensor does.

Run: python3 demos/fcw_compare.py
"""

import csv
import tempfile
from pathlib import Path

from deskcosim import run_simulation

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "fcw" / "fcw.sumocfg"
ROUTE_OFFSETS = {"A": 0.0, "B1": 200.0, "B2": 240.0}


def min_gap(out: Path) -> float:
    by_step: dict[int, dict[str, float]] = {}
    with (out / "trajectories.csv").open() as fh:
        for row in csv.DictReader(fh):
            pos = ROUTE_OFFSETS[row["edge"]] + float(row["lane_pos"])
            by_step.setdefault(int(row["step"]), {})[row["id"]] = pos
    return min(
        pair["lead"] - pair["ego0"] - 5.0
        for pair in by_step.values()
        if "lead" in pair and "ego0" in pair
    )


def triggers(out: Path) -> dict[str, int]:
    counts: dict[str, int] = {}
    with (out / "ego.csv").open() as fh:
        for row in csv.DictReader(fh):
            counts[row["trigger_source"]] = counts.get(row["trigger_source"], 0) + 1
    return counts


def main() -> None:
    work = Path(tempfile.mkdtemp(prefix="fcw-"))
    for radio in ("on", "off"):
        out = work / radio
        code = run_simulation([
            str(SCENARIO), "--ego-ids", "ego0", "--port", "0",
            "--radio", radio, "--out", str(out),
        ])
        assert code == 0
        counts = triggers(out)
        print(f"radio {radio}:")
        print(f"  min bumper gap {min_gap(out):6.2f} m")
        print(f"  braking rounds by source: "
              f"v2x={counts.get('v2x', 0)}, sensor={counts.get('sensor', 0)}, "
              f"free driving={counts.get('none', 0)}")
        collisions = (out / "events.log").read_text().count("CollisionDetected")
        print(f"  collisions: {collisions}\n")
    print(f"full outputs under {work}")


if __name__ == "__main__":
    main()
