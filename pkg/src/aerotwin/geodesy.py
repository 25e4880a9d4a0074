"""Great-circle and slant-range distances between geographic positions.

All distances are in meters on a spherical Earth of mean radius
6,371,000 m. Altitudes are local vertical offsets above a common
reference ground plane and are combined in quadrature for slant
ranges; this is accurate at the sub-kilometer scales the emulator
operates on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPosition:
    """WGS-84 latitude/longitude in degrees plus altitude in meters.

    Latitude must lie in [-90, 90] and longitude in [-180, 180];
    out-of-range values are rejected at construction.
    """

    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")
        if not -180.0 <= self.longitude_deg <= 180.0:
            raise ValueError(f"longitude {self.longitude_deg} outside [-180, 180]")


def haversine_distance(a: GeoPosition, b: GeoPosition) -> float:
    """Ground (great-circle) distance in meters; altitude is ignored.

    Symmetric and non-negative; zero exactly when both points share
    the same latitude and longitude.
    """
    lat1 = math.radians(a.latitude_deg)
    lat2 = math.radians(b.latitude_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.longitude_deg - a.longitude_deg)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def slant_distance(a: GeoPosition, b: GeoPosition) -> float:
    """3D separation in meters: ground distance and altitude difference in quadrature."""
    ground = haversine_distance(a, b)
    return math.hypot(ground, b.altitude_m - a.altitude_m)
