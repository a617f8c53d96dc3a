"""Car-following models at the desk: a braking platoon and a settling gap.

Run: python3 demos/car_following.py
"""

import math

from deskcosim import VehicleType
from deskcosim.models import IdmParams, idm_acceleration, krauss_next_speed

DT = 0.1


def braking_platoon() -> None:
    """Five Krauss cars at 13.9 m/s; the leader slams to a stop."""
    vtype = VehicleType("car")
    params = vtype.krauss()
    spacing = 13.9 * params.tau + vtype.min_gap
    pos = [-i * (vtype.length + spacing) for i in range(5)]
    spd = [13.9] * 5

    print("Krauss platoon, leader braking at 4.5 m/s^2:")
    print("  t      " + "  ".join(f"v{i}   " for i in range(5)) + " min bumper gap")
    for k in range(260):
        spd[0] = max(0.0, spd[0] - params.decel * DT)
        for i in range(1, 5):
            gap = pos[i - 1] - pos[i] - vtype.length - vtype.min_gap
            spd[i] = krauss_next_speed(spd[i], spd[i - 1], gap, 13.9, params, DT)
        pos = [p + v * DT for p, v in zip(pos, spd)]
        if k % 40 == 0 or k == 259:
            gaps = [pos[i - 1] - pos[i] - vtype.length for i in range(1, 5)]
            cols = "  ".join(f"{v:5.2f}" for v in spd)
            print(f"  {k * DT:5.1f}  {cols}  {min(gaps):6.2f} m")
    print("  Nobody touches anybody; the queue settles min_gap apart.\n")


def idm_settling() -> None:
    """IDM follower closing on a steady 20 m/s leader."""
    p = IdmParams()
    v0 = 30.0
    gap, v = 80.0, 20.0
    target = (p.s0 + 20.0 * p.t_headway) / math.sqrt(1.0 - (20.0 / v0) ** 4)

    print(f"IDM follower behind a 20 m/s leader (equilibrium gap {target:.2f} m):")
    for k in range(3001):
        acc = idm_acceleration(v, v - 20.0, gap, v0, p)
        v = max(0.0, v + acc * DT)
        gap += (20.0 - v) * DT
        if k % 500 == 0:
            print(f"  t={k * DT:6.1f}  v={v:6.3f} m/s  gap={gap:7.3f} m")
    print(f"  Settled within {abs(gap - target) / target:.3%} of the closed form.")


def main() -> None:
    braking_platoon()
    idm_settling()


if __name__ == "__main__":
    main()
