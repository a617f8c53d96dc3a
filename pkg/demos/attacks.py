"""Sybil and replay injection, seen from the packet log and the frames.

Run: python3 demos/attacks.py
"""

import csv
import random
import tempfile
from collections import Counter
from pathlib import Path

from deskcosim import ChannelModel, RadioMedium, run_simulation
from deskcosim.radio import KIND_REPLAYED, ReplayConfig

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios" / "fcw"


def flood_run() -> None:
    out = Path(tempfile.mkdtemp(prefix="attack-")) / "out"
    code = run_simulation([
        str(SCENARIO_DIR / "fcw.sumocfg"), "--ego-ids", "ego0", "--port", "0",
        "--attack", str(SCENARIO_DIR / "attacks.json"), "--out", str(out),
    ])
    assert code == 0

    sent: Counter[str] = Counter()
    senders: Counter[str] = Counter()
    with (out / "packets.csv").open() as fh:
        for row in csv.DictReader(fh):
            if row["event"] != "sent":
                continue
            sent[row["kind"]] += 1
            if row["attack_flag"] == "1":
                senders[row["sender"]] += 1
    print("transmissions by kind:", dict(sent))
    print("attack traffic by claimed sender:")
    for sender, count in sorted(senders.items()):
        print(f"  {sender:<12} {count} frames")
    print("The five phantoms never receive anything; they exist only as senders.\n")


def replay_probe() -> None:
    """Watch a replay attack reuse stale payloads with a fresh clock."""
    medium = RadioMedium(
        ChannelModel(), [], 0.1, random.Random(0),
        attacks=[ReplayConfig("victim", capture_start_s=0.5, capture_end_s=0.8, delay_s=2.0)],
    )
    medium.add_rsu("victim", 0.0, 0.0)
    print("replayed frames (payload clock vs emission clock, microseconds):")
    for step in range(40):
        for frame in medium.emit(step, step * 100_000):
            if frame.kind == KIND_REPLAYED:
                age = frame.emitted_at_us - frame.payload.timestamp_us
                print(f"  step {step}: payload t={frame.payload.timestamp_us:>7}"
                      f"  emitted t={frame.emitted_at_us:>7}  ({age / 1e6:.1f} s stale)")


def main() -> None:
    flood_run()
    replay_probe()


if __name__ == "__main__":
    main()
