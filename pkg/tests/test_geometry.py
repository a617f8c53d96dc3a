import math
import random

import pytest

from deskcosim import geometry

SQUARE = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]
BUILDING = [(170.0, 5.0), (180.0, 5.0), (180.0, 45.0), (170.0, 45.0)]


def test_point_classification():
    assert geometry.point_in_polygon((5.0, 5.0), SQUARE)
    assert not geometry.point_in_polygon((15.0, 5.0), SQUARE)
    assert not geometry.point_in_polygon((10.0, 5.0), SQUARE)  # on a wall
    assert not geometry.point_in_polygon((0.0, 0.0), SQUARE)  # on a vertex


def test_through_shot_counts_two_walls():
    assert geometry.crossing_count((-5.0, 5.0), (15.0, 5.0), SQUARE) == 2
    assert geometry.interior_length((-5.0, 5.0), (15.0, 5.0), SQUARE) == pytest.approx(10.0)


def test_miss_counts_nothing():
    assert geometry.crossing_count((-5.0, 12.0), (15.0, 12.0), SQUARE) == 0
    assert geometry.interior_length((-5.0, 12.0), (15.0, 12.0), SQUARE) == 0.0


def test_endpoint_inside_counts_one_wall():
    assert geometry.crossing_count((-5.0, 5.0), (5.0, 5.0), SQUARE) == 1
    assert geometry.interior_length((-5.0, 5.0), (5.0, 5.0), SQUARE) == pytest.approx(5.0)


def test_fully_interior_segment():
    assert geometry.crossing_count((2.0, 2.0), (8.0, 8.0), SQUARE) == 0
    assert geometry.interior_length((2.0, 2.0), (8.0, 8.0), SQUARE) == pytest.approx(
        6.0 * math.sqrt(2.0)
    )


def test_diagonal_through_shot():
    length = geometry.interior_length((-2.0, -2.0), (12.0, 12.0), SQUARE)
    assert geometry.crossing_count((-2.0, -2.0), (12.0, 12.0), SQUARE) == 2
    assert length == pytest.approx(10.0 * math.sqrt(2.0))


def test_grazing_along_wall_is_free():
    assert geometry.crossing_count((-5.0, 0.0), (15.0, 0.0), SQUARE) == 0
    assert geometry.interior_length((-5.0, 0.0), (15.0, 0.0), SQUARE) == 0.0


def test_corner_clip_is_free():
    # passes exactly through the (10, 10) vertex, tangent to the square
    assert geometry.crossing_count((5.0, 15.0), (15.0, 5.0), SQUARE) == 0


def test_zero_length_segment():
    assert geometry.interior_length((5.0, 5.0), (5.0, 5.0), SQUARE) == 0.0


def test_building_oracle_for_link_budget():
    # the fixture used by the shadowing model: 10 m wall-to-wall run
    walls, meters = geometry.occlusion((100.0, 25.0), (250.0, 25.0), [BUILDING])
    assert walls == 2
    assert meters == pytest.approx(10.0)


def test_occlusion_sums_over_obstacles():
    other = [(20.0, 0.0), (30.0, 0.0), (30.0, 10.0), (20.0, 10.0)]
    walls, meters = geometry.occlusion((-5.0, 5.0), (35.0, 5.0), [SQUARE, other])
    assert walls == 4
    assert meters == pytest.approx(20.0)


def test_interior_length_matches_dense_sampling():
    # independent estimate: classify 4096 evenly spaced midpoints and scale
    rng = random.Random(0x9E0)
    for _ in range(50):
        poly = _random_convex_polygon(rng)
        p1 = (rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0))
        p2 = (rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0))
        seg_len = math.dist(p1, p2)
        n = 4096
        hits = 0
        for i in range(n):
            t = (i + 0.5) / n
            mid = (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))
            if geometry.point_in_polygon(mid, poly):
                hits += 1
        estimate = hits / n * seg_len
        exact = geometry.interior_length(p1, p2, poly)
        assert exact == pytest.approx(estimate, abs=2.0 * seg_len / n + 1e-9)


def _random_convex_polygon(rng: random.Random) -> list[tuple[float, float]]:
    cx, cy = rng.uniform(-15.0, 15.0), rng.uniform(-15.0, 15.0)
    radius = rng.uniform(3.0, 12.0)
    angles = sorted(rng.uniform(0.0, 2.0 * math.pi) for _ in range(rng.randint(3, 7)))
    return [(cx + radius * math.cos(a), cy + radius * math.sin(a)) for a in angles]
