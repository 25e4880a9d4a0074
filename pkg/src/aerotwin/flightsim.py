"""Virtual vehicle emulator: waypoint missions and time-parametrized positions.

A flight plan is an ordered list of waypoints flown at a fixed cruise
speed. The mission is a chain of straight legs: a vertical climb from
the launch waypoint's ground altitude up to the takeoff altitude, one
leg per waypoint segment, and an optional straight return leg back to
the launch point at takeoff altitude. After the last leg the vehicle
holds position with phase ``LANDED`` so an experiment can outlive the
flight.

Leg interpolation happens in a local east-north-up frame anchored at
the leg start; at the sub-kilometer scale of these missions this is
indistinguishable from great-circle interpolation.

Flight-plan file format (JSON)::

    {
      "cruiseSpeed": 5.0,          // m/s, > 0
      "takeoffAltitude": 30.0,     // m, > 0
      "returnToStart": true,
      "waypoints": [ {"lat": .., "lon": .., "alt": ..}, ... ]   // >= 2
    }

``load_qgc_plan`` converts a QGroundControl ``.plan`` mission file into
this native format.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

from .geodesy import EARTH_RADIUS_M, GeoPosition, slant_distance


class MalformedDocument(ValueError):
    """Flight-plan document is not parseable at all."""


class InvalidPlan(ValueError):
    """Flight-plan document parsed but violates plan invariants."""


class Phase(str, enum.Enum):
    IDLE = "Idle"
    TAKEOFF = "Takeoff"
    ENROUTE = "Enroute"
    LANDED = "Landed"

    def __str__(self) -> str:  # log lines print the bare name
        return self.value


@dataclass(frozen=True)
class Waypoint:
    position: GeoPosition
    index: int


@dataclass(frozen=True)
class FlightPlan:
    waypoints: tuple[Waypoint, ...]
    cruise_speed_mps: float
    takeoff_altitude_m: float
    return_to_start: bool = False

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise InvalidPlan("flight plan needs at least two waypoints")
        if self.cruise_speed_mps <= 0:
            raise InvalidPlan("cruise speed must be positive")
        if self.takeoff_altitude_m <= 0:
            raise InvalidPlan("takeoff altitude must be positive")
        indices = [w.index for w in self.waypoints]
        if indices != sorted(set(indices)):
            raise InvalidPlan("waypoint indices must be strictly increasing")


@dataclass
class VehicleState:
    position: GeoPosition
    phase: Phase
    mission_time_s: float
    segment: int | None = None  # leg index while ENROUTE


@dataclass(frozen=True)
class _Leg:
    start: GeoPosition
    end: GeoPosition
    length_m: float
    # ENU offset of end relative to start, meters
    east_m: float
    north_m: float
    up_m: float


def _leg_between(a: GeoPosition, b: GeoPosition) -> _Leg:
    lat0 = math.radians(a.latitude_deg)
    east = math.radians(b.longitude_deg - a.longitude_deg) * EARTH_RADIUS_M * math.cos(lat0)
    north = math.radians(b.latitude_deg - a.latitude_deg) * EARTH_RADIUS_M
    up = b.altitude_m - a.altitude_m
    return _Leg(a, b, slant_distance(a, b), east, north, up)


def _interpolate(leg: _Leg, dist_m: float) -> GeoPosition:
    if leg.length_m <= 0.0 or dist_m >= leg.length_m:
        return leg.end
    f = dist_m / leg.length_m
    lat0 = math.radians(leg.start.latitude_deg)
    lat = leg.start.latitude_deg + math.degrees(f * leg.north_m / EARTH_RADIUS_M)
    lon = leg.start.longitude_deg + math.degrees(
        f * leg.east_m / (EARTH_RADIUS_M * math.cos(lat0))
    )
    return GeoPosition(lat, lon, leg.start.altitude_m + f * leg.up_m)


def _route_legs(plan: FlightPlan) -> list[_Leg]:
    """Climb leg, one leg per waypoint segment, optional return leg."""
    wp0 = plan.waypoints[0].position
    climb_top = GeoPosition(wp0.latitude_deg, wp0.longitude_deg, plan.takeoff_altitude_m)
    legs = [_leg_between(wp0, climb_top)]
    prev = climb_top
    for wp in plan.waypoints[1:]:
        legs.append(_leg_between(prev, wp.position))
        prev = wp.position
    if plan.return_to_start:
        legs.append(_leg_between(prev, climb_top))
    return legs


def mission_duration(plan: FlightPlan) -> float:
    """Total mission time in seconds: route length over cruise speed."""
    return sum(leg.length_m for leg in _route_legs(plan)) / plan.cruise_speed_mps


def position_at(plan: FlightPlan, t: float) -> VehicleState:
    """Vehicle state at mission time ``t`` seconds (pure function).

    t = 0 is the start of the vertical climb at waypoint 0. Past the
    end of the route the position holds at the terminal point with
    phase ``LANDED``.
    """
    if t < 0:
        raise ValueError("mission time must be >= 0")
    legs = _route_legs(plan)
    travelled = t * plan.cruise_speed_mps
    for i, leg in enumerate(legs):
        if travelled <= leg.length_m:
            phase = Phase.TAKEOFF if i == 0 else Phase.ENROUTE
            segment = None if i == 0 else i - 1
            # a zero-length climb leg is skipped, not held at
            if travelled == leg.length_m and leg.length_m == 0.0:
                continue
            return VehicleState(_interpolate(leg, travelled), phase, t, segment)
        travelled -= leg.length_m
    return VehicleState(legs[-1].end, Phase.LANDED, t)


def parse_flight_plan(document: str | dict) -> FlightPlan:
    """Parse and validate a native JSON flight-plan document.

    Accepts the JSON text or an already-decoded dict. Raises
    MalformedDocument if the text is not JSON, InvalidPlan for missing
    fields, fewer than two waypoints, non-positive speeds, or
    out-of-range coordinates.
    """
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"not valid JSON: {exc}") from exc
    else:
        data = document
    if not isinstance(data, dict):
        raise InvalidPlan("flight plan must be a JSON object")

    try:
        speed = float(data["cruiseSpeed"])
        takeoff_alt = float(data["takeoffAltitude"])
        raw_wps = data["waypoints"]
    except KeyError as exc:
        raise InvalidPlan(f"missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise InvalidPlan(f"non-numeric field: {exc}") from exc
    if not isinstance(raw_wps, list):
        raise InvalidPlan("waypoints must be a list")

    waypoints = []
    for i, wp in enumerate(raw_wps):
        try:
            pos = GeoPosition(float(wp["lat"]), float(wp["lon"]), float(wp.get("alt", 0.0)))
        except KeyError as exc:
            raise InvalidPlan(f"waypoint {i} missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise InvalidPlan(f"waypoint {i} invalid: {exc}") from exc
        waypoints.append(Waypoint(pos, i))

    return FlightPlan(
        waypoints=tuple(waypoints),
        cruise_speed_mps=speed,
        takeoff_altitude_m=takeoff_alt,
        return_to_start=bool(data.get("returnToStart", False)),
    )


def load_qgc_plan(document: str | dict) -> dict:
    """Convert a QGroundControl ``.plan`` file to the native plan format.

    Extracts simple mission items (takeoff command 22 and waypoint
    command 16): item params [4..6] carry lat/lon/alt. The takeoff
    item supplies the takeoff altitude and, when its coordinates are
    null, the planned home position supplies the launch point. The
    mission cruise speed becomes cruiseSpeed; a trailing
    return-to-launch item (command 20) sets returnToStart.
    """
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"not valid JSON: {exc}") from exc
    else:
        data = document
    mission = data.get("mission")
    if not isinstance(mission, dict):
        raise MalformedDocument("no mission section in plan file")

    home = mission.get("plannedHomePosition") or [None, None, 0.0]
    waypoints: list[dict] = []
    takeoff_alt = None
    return_to_start = False
    for item in mission.get("items", []):
        cmd = item.get("command")
        if cmd == 20:
            return_to_start = True
            continue
        if cmd not in (16, 22):
            continue
        params = item.get("params", [])
        lat, lon, alt = (params + [None] * 7)[4:7]
        if cmd == 22:
            takeoff_alt = alt if alt is not None else item.get("Altitude")
            if lat is None or lon is None:
                lat, lon = home[0], home[1]
            alt = 0.0  # launch waypoint sits on the ground
        if lat is None or lon is None:
            raise MalformedDocument("mission item without coordinates")
        waypoints.append({"lat": lat, "lon": lon, "alt": float(alt or 0.0)})

    native = {
        "cruiseSpeed": float(mission.get("cruiseSpeed", 5.0)),
        "takeoffAltitude": float(takeoff_alt if takeoff_alt is not None else 30.0),
        "returnToStart": return_to_start,
        "waypoints": waypoints,
    }
    parse_flight_plan(native)  # validate before handing back
    return native


class VehicleSim:
    """Mutable flight controller owned by the experiment loop.

    Wraps the pure ``position_at`` for nominal flight and layers the
    console behaviours on top: position holds, direct-to-waypoint
    retargeting, and land/abort descents. All movement is continuous
    at cruise speed; commands only change direction, never teleport.
    """

    def __init__(self, plan: FlightPlan, auto_start: bool = True):
        self.plan = plan
        self._legs = _route_legs(plan)
        self._speed = plan.cruise_speed_mps
        self._elapsed = 0.0  # wall mission time, includes holds
        self._progress = 0.0  # plan time actually flown
        self._holding = False
        self._aborted = False
        # direct-to mode: (target position, resume plan-time at arrival) or None
        self._direct: tuple[GeoPosition, float] | None = None
        self._descending = False
        self._landed_in_place = False
        self._position = position_at(plan, 0.0).position
        self.state = VehicleState(self._position, Phase.TAKEOFF if auto_start else Phase.IDLE, 0.0)
        self._started = auto_start

    # -- time stepping ----------------------------------------------------

    def step(self, dt: float) -> VehicleState:
        if dt < 0:
            raise ValueError("dt must be >= 0")
        if self._started:
            self._elapsed += dt
        if not self._started or self._holding:
            self._refresh_state()
            return self.state
        if self._descending:
            self._step_descent(dt)
        elif self._direct is not None:
            self._step_direct(dt)
        else:
            self._progress += dt
            nominal = position_at(self.plan, self._progress)
            self._position = nominal.position
        self._refresh_state()
        return self.state

    def _step_direct(self, dt: float) -> None:
        assert self._direct is not None
        target, resume_time = self._direct
        leg = _leg_between(self._position, target)
        move = self._speed * dt
        if move >= leg.length_m:
            self._position = target
            self._direct = None
            self._progress = resume_time
        else:
            self._position = _interpolate(leg, move)

    def _step_descent(self, dt: float) -> None:
        p = self._position
        alt = max(0.0, p.altitude_m - self._speed * dt)
        self._position = GeoPosition(p.latitude_deg, p.longitude_deg, alt)
        if alt == 0.0:
            self._descending = False
            self._landed_in_place = True

    def _refresh_state(self) -> None:
        if not self._started:
            phase, segment = Phase.IDLE, None
        elif self._descending:
            phase, segment = Phase.ENROUTE, None
        elif self._landed_in_place:
            phase, segment = Phase.LANDED, None
        elif self._direct is not None:
            phase, segment = Phase.ENROUTE, None
        else:
            nominal = position_at(self.plan, self._progress)
            phase, segment = nominal.phase, nominal.segment
        self.state = VehicleState(self._position, phase, self._elapsed, segment)

    # -- console behaviours ------------------------------------------------

    @property
    def airborne(self) -> bool:
        return self._started and self.state.phase is not Phase.LANDED

    def start(self) -> None:
        if self._started:
            raise ValueError("already started")
        self._started = True
        self._refresh_state()

    def hold(self) -> None:
        if not self.airborne:
            raise ValueError("not airborne")
        self._holding = True

    def resume(self) -> None:
        if not self._holding:
            raise ValueError("not holding")
        if self._aborted:
            raise ValueError("mission aborted")
        self._holding = False

    def goto(self, waypoint_index: int) -> None:
        if not self.airborne:
            raise ValueError("not airborne")
        if self._aborted:
            raise ValueError("mission aborted")
        indices = [w.index for w in self.plan.waypoints]
        if waypoint_index not in indices:
            raise ValueError(f"no waypoint {waypoint_index} in plan")
        pos_in_plan = indices.index(waypoint_index)
        if pos_in_plan == 0:
            wp0 = self.plan.waypoints[0].position
            target = GeoPosition(wp0.latitude_deg, wp0.longitude_deg, self.plan.takeoff_altitude_m)
        else:
            target = self.plan.waypoints[pos_in_plan].position
        # plan time at which the route reaches that waypoint (end of leg pos_in_plan)
        resume_time = sum(leg.length_m for leg in self._legs[: pos_in_plan + 1]) / self._speed
        self._holding = False
        self._descending = False
        self._direct = (target, resume_time)

    def land(self, abort: bool = False) -> None:
        if not self.airborne:
            raise ValueError("not airborne")
        self._holding = False
        self._direct = None
        self._descending = True
        if abort:
            self._aborted = True
