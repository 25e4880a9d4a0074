"""Distance computations against hand-derived closed forms."""

import math

import numpy as np
import pytest

from aerotwin.geodesy import EARTH_RADIUS_M, GeoPosition, haversine_distance, slant_distance

# one degree of arc along a meridian or the equator on a sphere
ONE_DEGREE_M = 2.0 * math.pi * EARTH_RADIUS_M / 360.0
ANTIPODAL_M = math.pi * EARTH_RADIUS_M


def test_identity_is_zero():
    p = GeoPosition(35.5, -78.2, 12.0)
    assert haversine_distance(p, p) == 0.0


def test_one_degree_of_longitude_on_equator():
    a = GeoPosition(0.0, 0.0)
    b = GeoPosition(0.0, 1.0)
    assert haversine_distance(a, b) == pytest.approx(ONE_DEGREE_M, abs=0.01)
    assert haversine_distance(a, b) == pytest.approx(111194.93, abs=0.01)


def test_antipodal_points():
    a = GeoPosition(0.0, 0.0)
    b = GeoPosition(0.0, 180.0)
    assert haversine_distance(a, b) == pytest.approx(ANTIPODAL_M, abs=0.1)
    assert haversine_distance(a, b) == pytest.approx(20015086.8, abs=0.1)


def test_slant_vertical_only():
    a = GeoPosition(35.0, -78.0, 0.0)
    b = GeoPosition(35.0, -78.0, 100.0)
    assert slant_distance(a, b) == pytest.approx(100.0, abs=1e-9)


def test_slant_equals_ground_at_equal_altitude():
    a = GeoPosition(35.0, -78.0, 25.0)
    b = GeoPosition(35.001, -78.002, 25.0)
    assert slant_distance(a, b) == haversine_distance(a, b)


def test_slant_three_four_five():
    # pick a longitude offset giving exactly 300 m of ground distance
    a = GeoPosition(0.0, 0.0, 0.0)
    dlon = 300.0 / ONE_DEGREE_M
    b = GeoPosition(0.0, dlon, 400.0)
    assert haversine_distance(a, b) == pytest.approx(300.0, abs=1e-6)
    assert slant_distance(a, b) == pytest.approx(500.0, abs=1e-5)


@pytest.mark.parametrize("lat,lon", [(90.1, 0.0), (-91.0, 10.0), (0.0, 180.5), (45.0, -181.0)])
def test_out_of_range_rejected(lat, lon):
    with pytest.raises(ValueError):
        GeoPosition(lat, lon)


def _random_positions(rng, n):
    lats = rng.uniform(-89.0, 89.0, n)
    lons = rng.uniform(-180.0, 180.0, n)
    alts = rng.uniform(0.0, 500.0, n)
    return [GeoPosition(la, lo, al) for la, lo, al in zip(lats, lons, alts)]


def test_symmetry_random():
    rng = np.random.default_rng(7)
    for a, b in zip(_random_positions(rng, 1000), _random_positions(rng, 1000)):
        assert haversine_distance(a, b) == pytest.approx(haversine_distance(b, a), rel=1e-12)


def test_triangle_inequality_random():
    rng = np.random.default_rng(11)
    pts = _random_positions(rng, 3000)
    for a, b, c in zip(pts[0::3], pts[1::3], pts[2::3]):
        ab = haversine_distance(a, b)
        bc = haversine_distance(b, c)
        ac = haversine_distance(a, c)
        assert ac <= ab + bc + 1e-6 * max(ab + bc, 1.0)


def test_slant_dominates_ground():
    rng = np.random.default_rng(13)
    for a, b in zip(_random_positions(rng, 500), _random_positions(rng, 500)):
        assert slant_distance(a, b) >= haversine_distance(a, b)
