"""Flight plan parsing and the time-parametrized vehicle position."""

import json
import math

import numpy as np
import pytest

from aerotwin.flightsim import (
    FlightPlan,
    InvalidPlan,
    MalformedDocument,
    Phase,
    VehicleSim,
    Waypoint,
    load_qgc_plan,
    mission_duration,
    parse_flight_plan,
    position_at,
)
from aerotwin.geodesy import EARTH_RADIUS_M, GeoPosition, haversine_distance, slant_distance

LAT = 35.7275
LON = -78.696


def east_deg(meters, lat=LAT):
    """Longitude offset covering the given eastward ground distance."""
    return meters / (EARTH_RADIUS_M * math.cos(math.radians(lat)) * math.pi / 180.0)


def simple_plan(length_m=100.0, speed=10.0, alt=30.0, wp0_alt=None, return_to_start=False):
    """Two waypoints `length_m` apart heading east."""
    return parse_flight_plan({
        "cruiseSpeed": speed,
        "takeoffAltitude": alt,
        "returnToStart": return_to_start,
        "waypoints": [
            {"lat": LAT, "lon": LON, "alt": alt if wp0_alt is None else wp0_alt},
            {"lat": LAT, "lon": LON + east_deg(length_m), "alt": alt},
        ],
    })


def test_parse_minimal_plan():
    plan = parse_flight_plan(json.dumps({
        "cruiseSpeed": 5,
        "takeoffAltitude": 30,
        "waypoints": [{"lat": 0, "lon": 0, "alt": 0}, {"lat": 0, "lon": 0.001, "alt": 30}],
    }))
    assert len(plan.waypoints) == 2
    assert plan.cruise_speed_mps == 5
    assert not plan.return_to_start


def test_parse_seven_waypoint_plan():
    wps = [{"lat": LAT, "lon": LON + east_deg(60.0 * i), "alt": 0.0 if i == 0 else 30.0}
           for i in range(7)]
    plan = parse_flight_plan({
        "cruiseSpeed": 5,
        "takeoffAltitude": 30,
        "returnToStart": True,
        "waypoints": wps,
    })
    assert len(plan.waypoints) == 7
    assert [w.index for w in plan.waypoints] == list(range(7))


def test_missing_speed_is_invalid():
    with pytest.raises(InvalidPlan):
        parse_flight_plan({"takeoffAltitude": 30,
                           "waypoints": [{"lat": 0, "lon": 0}, {"lat": 0, "lon": 1}]})


def test_single_waypoint_is_invalid():
    with pytest.raises(InvalidPlan):
        parse_flight_plan({"cruiseSpeed": 5, "takeoffAltitude": 30,
                           "waypoints": [{"lat": 0, "lon": 0}]})


def test_non_positive_speed_is_invalid():
    with pytest.raises(InvalidPlan):
        parse_flight_plan({"cruiseSpeed": 0, "takeoffAltitude": 30,
                           "waypoints": [{"lat": 0, "lon": 0}, {"lat": 0, "lon": 1}]})


def test_out_of_range_coordinate_is_invalid():
    with pytest.raises(InvalidPlan):
        parse_flight_plan({"cruiseSpeed": 5, "takeoffAltitude": 30,
                           "waypoints": [{"lat": 95, "lon": 0}, {"lat": 0, "lon": 1}]})


def test_garbage_is_malformed():
    with pytest.raises(MalformedDocument):
        parse_flight_plan("{not json")


def test_start_condition():
    plan = simple_plan(wp0_alt=0.0)
    state = position_at(plan, 0.0)
    wp0 = plan.waypoints[0].position
    assert state.phase is Phase.TAKEOFF
    assert state.position.latitude_deg == wp0.latitude_deg
    assert state.position.longitude_deg == wp0.longitude_deg
    assert state.position.altitude_m == 0.0


def test_midpoint_against_straight_line_oracle():
    # zero climb: wp0 already at cruise altitude
    plan = simple_plan(length_m=100.0, speed=10.0)
    state = position_at(plan, 5.0)
    # oracle: independent parametrization along the eastward line
    expected_lon = LON + east_deg(50.0)
    got = state.position
    err_m = haversine_distance(got, GeoPosition(LAT, expected_lon, 30.0))
    assert err_m < 0.1
    assert got.altitude_m == pytest.approx(30.0)


def test_holds_at_terminal_waypoint():
    plan = simple_plan()
    state = position_at(plan, 1e6)
    assert state.phase is Phase.LANDED
    end = plan.waypoints[-1].position
    assert state.position.latitude_deg == pytest.approx(end.latitude_deg, abs=1e-9)
    assert state.position.longitude_deg == pytest.approx(end.longitude_deg, abs=1e-9)


def test_duration_single_segment():
    plan = simple_plan(length_m=100.0, speed=10.0)  # zero climb, no return
    assert mission_duration(plan) == pytest.approx(10.0, rel=1e-6)


def test_duration_with_return():
    plan = simple_plan(length_m=100.0, speed=10.0, return_to_start=True)
    assert mission_duration(plan) == pytest.approx(20.0, rel=1e-6)


def test_duration_seven_waypoints_against_segment_sum():
    wps = [{"lat": LAT + 1e-4 * i, "lon": LON + east_deg(60.0 * i), "alt": 0.0 if i == 0 else 30.0}
           for i in range(7)]
    plan = parse_flight_plan({
        "cruiseSpeed": 5.0,
        "takeoffAltitude": 30.0,
        "returnToStart": True,
        "waypoints": wps,
    })
    # oracle: climb + slant polyline + straight return, summed independently
    pts = [GeoPosition(w["lat"], w["lon"], w["alt"]) for w in wps]
    climb_top = GeoPosition(pts[0].latitude_deg, pts[0].longitude_deg, 30.0)
    total = 30.0  # climb from alt 0
    prev = climb_top
    for p in pts[1:]:
        total += slant_distance(prev, p)
        prev = p
    total += slant_distance(prev, climb_top)
    assert mission_duration(plan) == pytest.approx(total / 5.0, rel=1e-9)


def test_continuity_no_teleporting():
    plan = simple_plan(length_m=250.0, speed=8.0, wp0_alt=0.0, return_to_start=True)
    rng = np.random.default_rng(3)
    duration = mission_duration(plan)
    for _ in range(500):
        t = rng.uniform(0.0, duration * 1.2)
        dt = rng.uniform(1e-3, 2.0)
        a = position_at(plan, t).position
        b = position_at(plan, t + dt).position
        assert slant_distance(a, b) <= plan.cruise_speed_mps * dt + 1e-6


def test_speed_exactness_enroute():
    plan = simple_plan(length_m=300.0, speed=6.0)
    # well inside the single segment
    a = position_at(plan, 10.0).position
    b = position_at(plan, 11.5).position
    assert slant_distance(a, b) == pytest.approx(6.0 * 1.5, rel=1e-6)


def test_endpoint_exactness():
    plan = simple_plan(length_m=123.4, speed=7.0, wp0_alt=0.0)
    end = plan.waypoints[-1].position
    state = position_at(plan, mission_duration(plan))
    assert state.position.latitude_deg == pytest.approx(end.latitude_deg, abs=1e-9)
    assert state.position.longitude_deg == pytest.approx(end.longitude_deg, abs=1e-9)
    assert state.position.altitude_m == pytest.approx(end.altitude_m, abs=1e-6)


def test_round_trip_ends_at_launch_point_at_takeoff_altitude():
    plan = simple_plan(length_m=150.0, speed=5.0, wp0_alt=0.0, return_to_start=True)
    wp0 = plan.waypoints[0].position
    state = position_at(plan, mission_duration(plan) + 5.0)
    assert state.phase is Phase.LANDED
    assert state.position.latitude_deg == pytest.approx(wp0.latitude_deg, abs=1e-9)
    assert state.position.longitude_deg == pytest.approx(wp0.longitude_deg, abs=1e-9)
    assert state.position.altitude_m == pytest.approx(plan.takeoff_altitude_m)


def test_takeoff_phase_then_enroute():
    plan = simple_plan(length_m=100.0, speed=10.0, wp0_alt=0.0)  # 3 s climb
    assert position_at(plan, 1.0).phase is Phase.TAKEOFF
    assert position_at(plan, 1.0).position.altitude_m == pytest.approx(10.0)
    mid = position_at(plan, 4.0)
    assert mid.phase is Phase.ENROUTE
    assert mid.segment == 0


def test_vehicle_sim_matches_pure_function():
    plan = simple_plan(length_m=200.0, speed=5.0, wp0_alt=0.0, return_to_start=True)
    sim = VehicleSim(plan)
    t = 0.0
    for _ in range(200):
        sim.step(0.5)
        t += 0.5
        expected = position_at(plan, t)
        assert slant_distance(sim.state.position, expected.position) < 1e-6
        assert sim.state.phase is expected.phase


def test_qgc_plan_conversion():
    qgc = {
        "fileType": "Plan",
        "mission": {
            "cruiseSpeed": 5.0,
            "plannedHomePosition": [LAT, LON, 100.0],
            "items": [
                {"command": 22, "params": [0, 0, 0, None, None, None, 30.0]},
                *[{"command": 16, "params": [0, 0, 0, 0, LAT, LON + east_deg(60.0 * i), 30.0]}
                  for i in range(1, 7)],
                {"command": 20, "params": []},
            ],
        },
    }
    native = load_qgc_plan(json.dumps(qgc))
    assert native["cruiseSpeed"] == 5.0
    assert native["takeoffAltitude"] == 30.0
    assert native["returnToStart"] is True
    assert len(native["waypoints"]) == 7
    assert native["waypoints"][0] == {"lat": LAT, "lon": LON, "alt": 0.0}
    plan = parse_flight_plan(native)
    assert isinstance(plan, FlightPlan)


def test_waypoint_indices_strictly_increasing():
    pos = GeoPosition(0.0, 0.0, 0.0)
    with pytest.raises(InvalidPlan):
        FlightPlan((Waypoint(pos, 1), Waypoint(pos, 0)), 5.0, 30.0)
