import math

import pytest

from deskcosim import ego
from deskcosim.ego import (
    Detection,
    EgoConfig,
    RoutePath,
    VehicleView,
    control_step,
    frames_to_detections,
    fuse,
    sense,
)
from deskcosim.models import IdmParams
from deskcosim.network import Connection, Edge, Junction, RoadNetwork
from deskcosim.radio import KIND_BSM, KIND_SYBIL, BsmPayload, RadioFrame

CONFIG = EgoConfig(vehicle_ids=("ego0",))
IDM = IdmParams(accel=1.0, decel=1.5, t_headway=1.5, s0=2.0)


def _corner_network():
    """200 m east leg then a 40 m north leg, like the FCW visibility corner."""
    junctions = {
        "J0": Junction("J0", 0.0, 0.0),
        "J1": Junction("J1", 200.0, 0.0),
        "J2": Junction("J2", 200.0, 40.0),
    }
    edges = {
        "A": Edge("A", "J0", "J1", 200.0, 13.9),
        "B": Edge("B", "J1", "J2", 40.0, 13.9),
    }
    return RoadNetwork(junctions, edges, [Connection("A", "B")])


PATH = RoutePath.from_route(_corner_network(), ["A", "B"])


def _ego(x=150.0, y=0.0, speed=10.0, heading=90.0):
    return VehicleView("ego0", x, y, speed, heading_deg=heading)


def _bsm(sender, x, y, speed=0.0, frame_id=0):
    return RadioFrame(frame_id, KIND_BSM, sender, BsmPayload(x, y, speed, 0.0, 0),
                      (x, y), 23.0, 0)


# -- route projection ---------------------------------------------------------


def test_projection_on_straight_leg():
    assert PATH.project(150.0, 0.0) == (pytest.approx(150.0), pytest.approx(0.0))
    assert PATH.project(150.0, 2.0) == (pytest.approx(150.0), pytest.approx(2.0))


def test_projection_wraps_the_corner():
    arc, lat = PATH.project(200.0, 10.0)
    assert arc == pytest.approx(210.0)
    assert lat == pytest.approx(0.0)
    assert PATH.length == pytest.approx(240.0)


def test_route_distance_beats_euclidean_around_corner():
    # straight-line range to (200, 10) is ~51 m but the drivable path is 60 m
    dets = sense(_ego(), [VehicleView("lead", 200.0, 10.0, 0.0)], PATH,
                 EgoConfig(("ego0",), sensor_range_m=60.0), [])
    assert len(dets) == 1
    assert dets[0].distance_m == pytest.approx(60.0 - 5.0)
    assert math.dist((150.0, 0.0), (200.0, 10.0)) < 55.0


# -- sensing ------------------------------------------------------------------


def test_leader_ahead_detected():
    dets = sense(_ego(), [VehicleView("lead", 170.0, 0.0, 4.0)], PATH, CONFIG, [])
    assert dets == [Detection("lead", 15.0, 6.0, "sensor")]


def test_vehicle_behind_ignored():
    assert sense(_ego(), [VehicleView("rear", 100.0, 0.0, 20.0)], PATH, CONFIG, []) == []


def test_out_of_range_ignored():
    assert sense(_ego(), [VehicleView("far", 185.1, 0.0, 0.0)], PATH, CONFIG, []) == []


def test_zero_range_sees_nothing():
    cfg = EgoConfig(("ego0",), sensor_range_m=0.0)
    assert sense(_ego(), [VehicleView("lead", 151.0, 0.0, 0.0)], PATH, cfg, []) == []


def test_wall_blocks_line_of_sight():
    wall = [(165.0, -1.0), (166.0, -1.0), (166.0, 1.0), (165.0, 1.0)]
    target = VehicleView("lead", 170.0, 0.0, 0.0)
    assert sense(_ego(), [target], PATH, CONFIG, [wall]) == []
    assert sense(_ego(), [target], PATH, CONFIG, []) != []


def test_off_route_target_uses_forward_euclidean_gap():
    dets = sense(_ego(), [VehicleView("cross", 160.0, 20.0, 0.0)], PATH, CONFIG, [])
    assert len(dets) == 1
    assert dets[0].distance_m == pytest.approx(math.hypot(10.0, 20.0) - 5.0)
    assert sense(_ego(), [VehicleView("gone", 140.0, 20.0, 0.0)], PATH, CONFIG, []) == []


def test_ego_never_detects_itself():
    assert sense(_ego(), [_ego()], PATH, CONFIG, []) == []


# -- v2x detections -----------------------------------------------------------


def test_bsm_claim_becomes_detection():
    dets = frames_to_detections(_ego(), [_bsm("lead", 165.0, 0.0)], PATH, {"lead": 5.0})
    assert dets == [Detection("lead", 10.0, 10.0, "v2x")]


def test_own_frames_skipped():
    assert frames_to_detections(_ego(), [_bsm("ego0", 165.0, 0.0)], PATH, {}) == []


def test_unknown_sender_gets_default_length():
    dets = frames_to_detections(_ego(), [_bsm("phantom0", 165.0, 0.0)], PATH, {})
    assert dets[0].distance_m == pytest.approx(165.0 - 150.0 - 5.0)


def test_sybil_claims_are_trusted():
    frame = RadioFrame(9, KIND_SYBIL, "phantom1", BsmPayload(170.0, 0.0, 0.0, 0.0, 0),
                       (170.0, 0.0), 23.0, 0)
    dets = frames_to_detections(_ego(), [frame], PATH, {})
    assert dets[0].source == "v2x"


# -- fusion -------------------------------------------------------------------


def test_fusion_keeps_closest_per_target():
    merged = fuse([
        Detection("lead", 18.0, 5.0, "sensor"),
        Detection("lead", 15.0, 5.0, "v2x"),
        Detection("other", 40.0, 0.0, "sensor"),
    ])
    assert merged == [
        Detection("lead", 15.0, 5.0, "v2x"),
        Detection("other", 40.0, 0.0, "sensor"),
    ]


# -- controller ---------------------------------------------------------------


def test_free_flow_accelerates_toward_v0():
    decision = control_step(_ego(speed=10.0), [], CONFIG, 30.0, IDM, 0.1)
    assert decision.trigger == "none"
    assert decision.ttc_s is None
    expect = 10.0 + (1.0 - (10.0 / 30.0) ** 4) * 0.1
    assert decision.commanded_speed == pytest.approx(expect)


def test_free_flow_caps_at_desired_speed():
    decision = control_step(_ego(speed=29.999), [], CONFIG, 30.0, IDM, 1.0)
    assert decision.commanded_speed <= 30.0


def test_ttc_below_threshold_is_emergency():
    det = Detection("lead", 20.0, 10.0, "sensor")
    decision = control_step(_ego(speed=10.0), [det], CONFIG, 30.0, IDM, 0.1)
    assert decision.ttc_s == pytest.approx(2.0)
    assert decision.trigger == "sensor"
    assert decision.commanded_speed == pytest.approx(10.0 - 0.9)


def test_caution_zone_brakes_comfortably():
    det = Detection("lead", 40.0, 10.0, "v2x")
    decision = control_step(_ego(speed=10.0), [det], CONFIG, 30.0, IDM, 0.1)
    assert decision.ttc_s == pytest.approx(4.0)  # reported, above threshold
    assert decision.trigger == "v2x"
    assert decision.commanded_speed == pytest.approx(10.0 - 0.3)


def test_hold_clearance_keeps_braking_at_low_speed():
    # at v=2 the dynamic zone is only 10 m; the floor keeps 20 m uncomfortable
    det = Detection("lead", 20.0, 0.0, "sensor")
    decision = control_step(_ego(speed=2.0), [det], CONFIG, 30.0, IDM, 0.1)
    assert decision.trigger == "sensor"
    assert decision.commanded_speed == pytest.approx(2.0 - 0.3)


def test_far_detection_leaves_free_flow():
    det = Detection("lead", 60.0, 0.0, "sensor")
    decision = control_step(_ego(speed=10.0), [det], CONFIG, 30.0, IDM, 0.1)
    assert decision.trigger == "none"


def test_commanded_speed_never_negative():
    det = Detection("lead", 1.0, 10.0, "sensor")
    decision = control_step(_ego(speed=0.05), [det], CONFIG, 30.0, IDM, 0.1)
    assert decision.commanded_speed == 0.0


def test_emergency_prefers_lowest_ttc_source():
    dets = [
        Detection("near", 30.0, 10.0, "sensor"),   # ttc 3.0
        Detection("lead", 12.0, 10.0, "v2x"),      # ttc 1.2
    ]
    decision = control_step(_ego(speed=10.0), dets, CONFIG, 30.0, IDM, 0.1)
    assert decision.ttc_s == pytest.approx(1.2)
    assert decision.trigger == "v2x"
