"""Car-following models: Krauss safe-speed and the Intelligent Driver Model.

Both are deterministic here (no dawdling noise); randomness would belong to a
seeded traffic stream, not the update law. Speeds are m/s, gaps are net
bumper-to-bumper distances in m.

References:
    S. Krauss, Microscopic modeling of traffic flow, thesis, 1998.
    M. Treiber, A. Hennecke, D. Helbing, Congested traffic states in empirical
    observations and microscopic simulations, Phys. Rev. E 62, 2000.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

B_EMERGENCY = 9.0  # hard floor for commanded decelerations, m/s^2


class GapDegenerate(Exception):
    """Follower and leader overlap (gap <= 0); no model speed is defined."""


@dataclass(frozen=True)
class KraussParams:
    accel: float = 2.6
    decel: float = 4.5
    tau: float = 1.0


@dataclass(frozen=True)
class IdmParams:
    accel: float = 1.0
    decel: float = 1.5
    t_headway: float = 1.5
    s0: float = 2.0
    delta: float = 4.0


def krauss_safe_speed(speed: float, leader_speed: float, gap: float, p: KraussParams) -> float:
    """Fastest speed from which the follower can always avoid a collision.

    v_safe = v_l + (g - v_l*tau) / (v_mean/b + tau) with v_mean the average of
    the two current speeds; never negative.
    """
    v_mean = 0.5 * (speed + leader_speed)
    v_safe = leader_speed + (gap - leader_speed * p.tau) / (v_mean / p.decel + p.tau)
    return max(0.0, v_safe)


def krauss_next_speed(
    speed: float,
    leader_speed: float | None,
    gap: float | None,
    limit: float,
    p: KraussParams,
    dt: float,
) -> float:
    """One Krauss update: accelerate, but no faster than safe or legal."""
    v_next = min(speed + p.accel * dt, limit)
    if leader_speed is not None and gap is not None:
        v_next = min(v_next, krauss_safe_speed(speed, leader_speed, gap, p))
    return max(0.0, v_next)


def idm_acceleration(
    speed: float, closing_speed: float, gap: float, v0: float, p: IdmParams
) -> float:
    """IDM acceleration for a follower with a leader `gap` metres ahead.

    closing_speed is v - v_leader (positive while approaching). The desired
    dynamic gap is s* = s0 + v*T + v*dv / (2*sqrt(a*b)). The result is clamped
    to [-B_EMERGENCY, accel].
    """
    if gap <= 0.0:
        raise GapDegenerate(f"gap {gap} m")
    s_star = p.s0 + speed * p.t_headway + speed * closing_speed / (
        2.0 * math.sqrt(p.accel * p.decel)
    )
    acc = p.accel * (1.0 - _v_term(speed, v0, p.delta) - (s_star / gap) ** 2)
    return max(-B_EMERGENCY, min(p.accel, acc))


def idm_free_acceleration(speed: float, v0: float, p: IdmParams) -> float:
    """IDM with the interaction term dropped: relax toward the desired speed."""
    return p.accel * (1.0 - _v_term(speed, v0, p.delta))


def idm_equilibrium_gap(speed: float, v0: float, p: IdmParams) -> float:
    """Steady-state gap while following a leader at constant `speed`."""
    return (p.s0 + speed * p.t_headway) / math.sqrt(1.0 - _v_term(speed, v0, p.delta))


def _v_term(speed: float, v0: float, delta: float) -> float:
    if v0 <= 0.0:
        return 1.0
    return (speed / v0) ** delta
