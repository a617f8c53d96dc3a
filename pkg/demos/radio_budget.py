"""Link budgets around a building: when a broadcast stops arriving.

A transmitter sits west of a 40 m x 30 m building; the receiver walks
east through its shadow. Run: python3 demos/radio_budget.py
"""

from deskcosim import ChannelModel

BUILDING = ((120.0, -15.0), (160.0, -15.0), (160.0, 15.0), (120.0, 15.0))


def main() -> None:
    channel = ChannelModel()
    tx = (0.0, 0.0)
    print(f"Transmitter at {tx}, 23 dBm, sensitivity {channel.sensitivity_dbm} dBm")
    print(f"Building footprint x 120..160, y -15..15 "
          f"(walls {channel.wall_db} dB, interior {channel.interior_db_per_m} dB/m)\n")
    print("  rx at x    dist    path loss   walls  interior    rx power  heard?")
    for x in (60.0, 110.0, 170.0, 250.0, 400.0, 800.0, 1600.0, 2600.0):
        link = channel.budget(23.0, tx, (x, 0.0), [BUILDING])
        verdict = "yes" if link.rx_power_dbm >= channel.sensitivity_dbm else "no"
        print(
            f"  {x:7.0f}  {link.distance_m:6.0f} m  {link.path_loss_db:8.2f} dB"
            f"  {link.wall_count:5d}  {link.interior_m:6.1f} m"
            f"  {link.rx_power_dbm:8.2f} dBm  {verdict}"
        )
    print("\nThe 40 m interior run costs more than doubling the distance:")
    shadowed = channel.budget(23.0, tx, (170.0, 0.0), [BUILDING])
    clear = channel.budget(23.0, tx, (170.0, 0.0), [])
    print(f"  same 170 m link, no building: {clear.rx_power_dbm:7.2f} dBm")
    print(f"  through the building:         {shadowed.rx_power_dbm:7.2f} dBm"
          f"  ({shadowed.obstacle_db:.1f} dB obstacle loss)")


if __name__ == "__main__":
    main()
