"""Fibonacci-lattice viewport centers on the unit sphere.

Angles follow the lattice definition directly: ``z_k = 1 - 2k/(n-1)``,
``theta_k = arccos(z_k)`` and ``psi_k = 2*pi*frac(k/phi)``.  Geographic
coordinates use the linear maps ``lat = deg(theta) - 90`` and
``lon = deg(psi) - 180``; note this puts ``z = +1`` at ``lat = -90``.
Every module downstream uses the same convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class SpherePoint:
    index: int
    z: float
    theta: float
    psi: float
    lat: float
    lon: float
    xyz: tuple[float, float, float]

    @property
    def lat_lon_radians(self) -> tuple[float, float]:
        return math.radians(self.lat), math.radians(self.lon)

    def to_dict(self) -> dict:
        return {
            "k": self.index,
            "theta": self.theta,
            "psi": self.psi,
            "lat": self.lat,
            "lon": self.lon,
            "xyz": list(self.xyz),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpherePoint":
        theta, psi = float(d["theta"]), float(d["psi"])
        xyz = d.get("xyz") or _xyz(theta, psi)
        return cls(
            index=int(d["k"]),
            z=float(xyz[2]),
            theta=theta,
            psi=psi,
            lat=float(d["lat"]),
            lon=float(d["lon"]),
            xyz=tuple(float(v) for v in xyz),
        )


def _xyz(theta: float, psi: float) -> tuple[float, float, float]:
    s = math.sin(theta)
    return (s * math.cos(psi), s * math.sin(psi), math.cos(theta))


def to_geographic(theta: float, psi: float) -> tuple[float, float]:
    """Map polar/azimuth angles (radians) to (lat, lon) in degrees."""
    return theta * 180.0 / math.pi - 90.0, psi * 180.0 / math.pi - 180.0


def point_from_angles(index: int, theta: float, psi: float) -> SpherePoint:
    lat, lon = to_geographic(theta, psi)
    xyz = _xyz(theta, psi)
    return SpherePoint(index, xyz[2], theta, psi, lat, lon, xyz)


def fibonacci_sample(n: int) -> list[SpherePoint]:
    """Return ``n`` Fibonacci-lattice points ordered by ``k``.

    Raises DomainError for ``n < 2``: the lattice divides by ``n - 1``.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 2:
        raise DomainError(f"fibonacci_sample needs n >= 2 (z_k divides by n - 1), got {n!r}")
    n = int(n)
    points = []
    for k in range(n):
        z = 1.0 - 2.0 * k / (n - 1)
        theta = math.acos(z)
        q = k / GOLDEN_RATIO
        psi = 2.0 * math.pi * (q - math.floor(q))
        lat, lon = to_geographic(theta, psi)
        s = math.sin(theta)
        xyz = (s * math.cos(psi), s * math.sin(psi), math.cos(theta))
        points.append(SpherePoint(k, z, theta, psi, lat, lon, xyz))
    return points


def lat_long_grid(n_lat: int, n_lon: int) -> list[SpherePoint]:
    """Equiangular grid with cell-centred latitudes; used as a uniformity baseline."""
    if n_lat < 1 or n_lon < 1:
        raise DomainError("grid needs at least one latitude and one longitude")
    points = []
    for i in range(n_lat):
        theta = math.pi * (i + 0.5) / n_lat
        for j in range(n_lon):
            psi = 2.0 * math.pi * j / n_lon
            points.append(point_from_angles(len(points), theta, psi))
    return points


def points_xyz(points) -> np.ndarray:
    return np.array([p.xyz for p in points], dtype=np.float64).reshape(-1, 3)


def points_lat_lon(points) -> np.ndarray:
    """(V, 2) array of (lat, lon) in radians."""
    return np.radians(np.array([(p.lat, p.lon) for p in points], dtype=np.float64).reshape(-1, 2))
