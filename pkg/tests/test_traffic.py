import math

import pytest

from deskcosim import models
from deskcosim.models import GapDegenerate, IdmParams, KraussParams
from deskcosim.network import Connection, Edge, Junction, RoadNetwork
from deskcosim.traffic import (
    DemandEntry,
    NotOwner,
    TrafficLightProgram,
    TrafficWorld,
    UnknownVehicle,
    VehicleType,
)

STEP_US = 100_000
DT = 0.1


def _line_network(edge_lengths, limit=13.9, tls_after=None):
    """Chain of edges along +x. tls_after names the edge whose end has lights."""
    junctions = {}
    edges = {}
    connections = []
    x = 0.0
    names = [f"E{i}" for i in range(len(edge_lengths))]
    junctions["J0"] = Junction("J0", 0.0, 0.0)
    for i, length in enumerate(edge_lengths):
        x += length
        junctions[f"J{i + 1}"] = Junction(f"J{i + 1}", x, 0.0)
        edges[names[i]] = Edge(names[i], f"J{i}", f"J{i + 1}", length, limit)
    for a, b in zip(names, names[1:]):
        tls_id = "tls0" if tls_after == a else None
        connections.append(Connection(a, b, tls_id=tls_id, link_index=0))
    return RoadNetwork(junctions, edges, connections), names


def _world(net, demand, tls=None):
    return TrafficWorld(net, demand, tls or {}, STEP_US)


def _entry(vid, vtype, route, depart=0.0):
    return DemandEntry(vid, vtype, tuple(route), round(depart * 1e6))


KRAUSS = VehicleType("car")
IDM = VehicleType("av", model="idm", accel=1.0, decel=1.5, tau=1.5)


# -- model oracles ------------------------------------------------------------


def test_krauss_safe_speed_worked_example():
    # v=10, leader 5, gap 20: 5 + (20-5)/(7.5/4.5 + 1) = 10.625
    v = models.krauss_safe_speed(10.0, 5.0, 20.0, KraussParams())
    assert v == pytest.approx(10.625, rel=1e-12)


def test_krauss_equilibrium_holds_speed():
    # gap exactly v_l*tau makes the safe speed equal the leader speed
    v = models.krauss_safe_speed(13.9, 13.9, 13.9, KraussParams())
    assert v == pytest.approx(13.9, rel=1e-12)


def test_krauss_never_negative():
    assert models.krauss_safe_speed(30.0, 0.0, 0.0, KraussParams()) == 0.0
    assert models.krauss_next_speed(0.0, 0.0, -2.0, 13.9, KraussParams(), DT) == 0.0


def test_idm_worked_example():
    # v=20, equal speeds, gap 50, v0=30: s*=32, a = 1-(2/3)^4-(32/50)^2
    acc = models.idm_acceleration(20.0, 0.0, 50.0, 30.0, IdmParams())
    assert acc == pytest.approx(1.0 - (2.0 / 3.0) ** 4 - 0.64**2, rel=1e-12)
    assert acc == pytest.approx(0.392869135802469, abs=1e-12)


def test_idm_standstill_at_minimum_gap_is_balanced():
    assert models.idm_acceleration(0.0, 0.0, 2.0, 30.0, IdmParams()) == pytest.approx(0.0)


def test_idm_degenerate_gap_raises():
    with pytest.raises(GapDegenerate):
        models.idm_acceleration(5.0, 1.0, 0.0, 30.0, IdmParams())


def test_idm_clamped_to_emergency_braking():
    acc = models.idm_acceleration(30.0, 30.0, 0.5, 30.0, IdmParams())
    assert acc == -models.B_EMERGENCY


def test_idm_equilibrium_gap_value():
    # (2 + 30) / sqrt(1 - (20/30)^4) = 32 / (sqrt(65)/9)
    gap = models.idm_equilibrium_gap(20.0, 30.0, IdmParams())
    assert gap == pytest.approx(32.0 * 9.0 / math.sqrt(65.0), rel=1e-12)
    assert gap == pytest.approx(35.722, abs=1e-3)


# -- world stepping -----------------------------------------------------------


def test_empty_world_steps():
    net, _ = _line_network([500.0])
    world = _world(net, [])
    result = world.step(0)
    assert world.vehicle_ids() == ()
    assert result.inserted == [] and result.arrived == [] and result.collisions == []


def test_single_vehicle_first_step():
    net, _ = _line_network([5000.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0"])])
    world.step(0)
    veh = world.vehicle("veh0")
    assert veh.speed == pytest.approx(0.26)
    assert veh.lane_pos == pytest.approx(0.026)


def test_depart_time_gate():
    net, _ = _line_network([500.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0"], depart=5.0)])
    world.step(round(4.9e6))
    assert world.vehicle_ids() == ()
    world.step(round(5.0e6))
    assert world.vehicle_ids() == ("veh0",)


def test_insertion_queues_until_headroom_free():
    net, _ = _line_network([500.0])
    world = _world(
        net,
        [_entry("a", KRAUSS, ["E0"]), _entry("b", KRAUSS, ["E0"])],
    )
    world.step(0)
    assert world.vehicle_ids() == ("a",)  # b blocked: first 10 m not free
    steps = 0
    while "b" not in world.vehicle_ids() and steps < 100:
        steps += 1
        world.step(steps * STEP_US)
    # a needs to put its tail 10 m clear: pos > 15 m, reached in a few seconds
    assert "b" in world.vehicle_ids()
    assert world.vehicle("a").lane_pos - KRAUSS.length >= 10.0


def test_follower_tracks_leader_without_collision():
    net, _ = _line_network([2000.0])
    world = _world(net, [_entry("a", KRAUSS, ["E0"]), _entry("b", KRAUSS, ["E0"], depart=2.0)])
    for k in range(400):
        result = world.step(k * STEP_US)
        assert result.collisions == []
    a, b = world.vehicle("a"), world.vehicle("b")
    assert b.lane_pos < a.lane_pos - a.vtype.length


def test_arrival_removes_vehicle():
    net, _ = _line_network([30.0, 30.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0", "E1"])])
    arrived = []
    for k in range(200):
        arrived += world.step(k * STEP_US).arrived
    assert arrived == ["veh0"]
    assert world.vehicle_ids() == ()
    assert world.arrived_count == 1


def test_route_carryover_across_junction():
    net, _ = _line_network([20.0, 500.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0", "E1"])])
    seen_edges = set()
    for k in range(60):
        world.step(k * STEP_US)
        if "veh0" in world.vehicles:
            seen_edges.add(world.vehicle("veh0").edge_id)
    assert seen_edges == {"E0", "E1"}


def test_conservation_inserted_equals_active_plus_arrived():
    net, _ = _line_network([60.0, 60.0])
    demand = [_entry(f"v{i}", KRAUSS, ["E0", "E1"], depart=i * 1.5) for i in range(6)]
    world = _world(net, demand)
    for k in range(300):
        world.step(k * STEP_US)
    assert world.inserted_count == len(world.vehicles) + world.arrived_count
    assert world.inserted_count == 6


# -- traffic lights -----------------------------------------------------------


def _tls(phases, offset=0.0, owner="traffic"):
    return TrafficLightProgram("tls0", tuple(phases), offset=offset, n_links=1, owner=owner)


def test_phase_lookup_walks_cumulative_durations():
    prog = _tls([(30.0, "G"), (3.0, "y"), (27.0, "r")])
    assert prog.state(0.0) == "G"
    assert prog.state(29.9) == "G"
    assert prog.state(30.0) == "y"
    assert prog.state(32.9) == "y"
    assert prog.state(33.0) == "r"
    assert prog.state(59.9) == "r"
    assert prog.state(60.0) == "G"  # wraps


def test_phase_offset_shifts_schedule():
    prog = _tls([(30.0, "G"), (30.0, "r")], offset=30.0)
    assert prog.state(0.0) == "r"
    assert prog.state(30.0) == "G"


def test_red_light_holds_vehicle_short_of_line():
    net, _ = _line_network([100.0, 100.0], tls_after="E0")
    world = _world(net, [_entry("veh0", KRAUSS, ["E0", "E1"])], {"tls0": _tls([(600.0, "r")])})
    for k in range(600):
        world.step(k * STEP_US)
    veh = world.vehicle("veh0")
    assert veh.edge_id == "E0"
    assert veh.lane_pos <= 100.0
    assert veh.lane_pos > 95.0  # crept up to the line
    assert veh.speed < 0.1


def test_green_light_lets_vehicle_through():
    net, _ = _line_network([100.0, 100.0], tls_after="E0")
    world = _world(net, [_entry("veh0", KRAUSS, ["E0", "E1"])], {"tls0": _tls([(600.0, "G")])})
    arrived = []
    for k in range(300):
        arrived += world.step(k * STEP_US).arrived
    assert arrived == ["veh0"]  # crossed the junction and ran off the far end


def test_yellow_is_run_when_stop_would_be_harsh():
    # all-yellow program; a vehicle arriving fast at the line cannot stop at
    # decel<=b any more and proceeds
    from deskcosim.traffic import Vehicle

    net, _ = _line_network([100.0, 100.0], tls_after="E0")
    world = _world(net, [], {"tls0": _tls([(600.0, "y")])})
    world.vehicles["veh0"] = Vehicle("veh0", KRAUSS, ("E0", "E1"), lane_pos=95.0, speed=13.9)
    world.step(0)
    # stopping from 13.9 m/s needs 13.9^2/(2*4.5) = 21.5 m, only 5 m left
    assert world.vehicle("veh0").speed > 10.0


def test_yellow_stops_vehicle_that_still_can():
    from deskcosim.traffic import Vehicle

    net, _ = _line_network([100.0, 100.0], tls_after="E0")
    world = _world(net, [], {"tls0": _tls([(600.0, "y")])})
    world.vehicles["veh0"] = Vehicle("veh0", KRAUSS, ("E0", "E1"), lane_pos=40.0, speed=10.0)
    for k in range(200):
        world.step(k * STEP_US)
    veh = world.vehicle("veh0")
    assert veh.edge_id == "E0"
    assert veh.speed < 0.1


def test_tls_override_needs_ego_owner():
    prog = _tls([(60.0, "r")])
    world = _world(_line_network([100.0, 100.0], tls_after="E0")[0], [], {"tls0": prog})
    with pytest.raises(NotOwner):
        world.set_tls_state("tls0", "G")
    prog.owner = "ego"
    world.set_tls_state("tls0", "G")
    assert world.tls_state("tls0", 12.0) == "G"  # latched over the schedule


def test_tls_override_validated():
    prog = _tls([(60.0, "r")], owner="ego")
    world = _world(_line_network([100.0, 100.0], tls_after="E0")[0], [], {"tls0": prog})
    with pytest.raises(Exception):
        world.set_tls_state("tls0", "GG")
    with pytest.raises(Exception):
        world.set_tls_state("tls0", "x")


def test_ego_owned_program_without_commands_follows_schedule():
    prog = _tls([(30.0, "G"), (30.0, "r")], owner="ego")
    assert prog.state(45.0) == "r"


# -- ownership ----------------------------------------------------------------


def test_claim_unknown_vehicle_rejected():
    net, _ = _line_network([100.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0"])])
    with pytest.raises(UnknownVehicle):
        world.claim_vehicles(["veh0", "ghost"])


def test_claimed_vehicle_keeps_commanded_speed():
    net, _ = _line_network([5000.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0"])])
    assert world.claim_vehicles(["veh0"]) == ("veh0",)
    world.step(0)  # inserted with owner ego
    world.set_speed("veh0", 7.0)
    world.step(STEP_US)
    veh = world.vehicle("veh0")
    assert veh.owner == "ego"
    assert veh.speed == 7.0  # no model acceleration applied
    assert veh.lane_pos == pytest.approx(0.7)


def test_set_speed_clamps_below_zero():
    net, _ = _line_network([100.0])
    world = _world(net, [_entry("veh0", KRAUSS, ["E0"])])
    world.step(0)
    world.set_speed("veh0", -3.0)
    assert world.vehicle("veh0").speed == 0.0


def test_external_brake_of_claimed_leader_stops_follower():
    net, _ = _line_network([3000.0])
    world = _world(
        net, [_entry("lead", KRAUSS, ["E0"]), _entry("tail", KRAUSS, ["E0"], depart=3.0)]
    )
    world.claim_vehicles(["lead"])
    world.step(0)
    world.set_speed("lead", 13.9)
    min_gap = 1e9
    for k in range(1, 500):
        if k == 150:
            pass
        if k >= 150:  # leader brakes at 4.5 m/s^2 to a stop
            world.set_speed("lead", max(0.0, world.vehicle("lead").speed - 4.5 * DT))
        world.step(k * STEP_US)
        if "tail" in world.vehicles:
            lead, tail = world.vehicle("lead"), world.vehicle("tail")
            min_gap = min(min_gap, lead.lane_pos - lead.vtype.length - tail.lane_pos)
    assert min_gap > 0.0
    assert world.vehicle("lead").speed == 0.0


# -- determinism --------------------------------------------------------------


def test_identical_worlds_stay_identical():
    def run():
        net, _ = _line_network([200.0, 200.0], tls_after="E0")
        demand = [
            _entry(f"v{i}", KRAUSS if i % 2 else IDM, ["E0", "E1"], depart=i * 0.7)
            for i in range(5)
        ]
        world = _world(net, demand, {"tls0": _tls([(20.0, "G"), (3.0, "y"), (20.0, "r")])})
        trace = []
        for k in range(500):
            world.step(k * STEP_US)
            trace.append(
                tuple(
                    (v.id, v.edge_id, v.lane_pos, v.speed)
                    for v in map(world.vehicle, world.vehicle_ids())
                )
            )
        return trace

    assert run() == run()
