"""Walker-Delta constellations, two-body propagation and user-satellite geometry.

Frames: ECI and ECEF coincide at t=0 with the Greenwich meridian on the x-axis.
ECEF coordinates are obtained by rotating inertial vectors by -omega_E * t about z.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

EARTH_RADIUS_KM = 6378.137
EARTH_MU_KM3_S2 = 398600.4418
EARTH_ROTATION_RAD_S = 7.2921e-5
MIN_ELEVATION_DEG = 10.0
# absorbs round-off for satellites placed exactly on the mask
ELEVATION_TOLERANCE_DEG = 1e-9

MIN_ALTITUDE_KM = 300.0
MAX_ALTITUDE_KM = 2000.0


@dataclass(frozen=True)
class OrbitalElements:
    semi_major_axis: float  # km
    eccentricity: float
    inclination: float  # rad
    raan: float  # rad
    arg_perigee: float  # rad
    true_anomaly_epoch: float  # rad

    @property
    def mean_motion(self) -> float:
        return float(np.sqrt(EARTH_MU_KM3_S2 / self.semi_major_axis**3))

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.mean_motion


@dataclass(frozen=True)
class ConstellationConfig:
    num_planes: int
    sats_per_plane: int
    altitude_km: float
    inclination_deg: float
    phasing_factor: int = 1

    @property
    def total(self) -> int:
        return self.num_planes * self.sats_per_plane

    @property
    def semi_major_axis(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km


PRESETS: dict[str, ConstellationConfig] = {
    "starlink-shell1": ConstellationConfig(72, 22, 550.0, 53.0),
    "oneweb-phase1": ConstellationConfig(18, 36, 1200.0, 87.9),
    "kuiper-shell1": ConstellationConfig(34, 34, 630.0, 51.9),
}


def preset(name: str) -> ConstellationConfig:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown constellation {name!r} (known: {known})") from None


@dataclass(frozen=True)
class SatelliteState:
    sat_id: int
    ecef_position: np.ndarray
    elements: OrbitalElements


@dataclass(frozen=True)
class GeometryRecord:
    user_id: int
    sat_id: int
    elevation: float  # deg
    slant_range: float  # km
    visible: bool


def build_walker_delta(config: ConstellationConfig) -> list[OrbitalElements]:
    """Return the elements of a Walker-Delta shell, plane-major order.

    Satellite ``p * sats_per_plane + s`` sits in plane ``p`` at in-plane slot ``s``.
    """
    if config.num_planes <= 0 or config.sats_per_plane <= 0:
        raise ConfigError("num_planes and sats_per_plane must be positive")
    if not MIN_ALTITUDE_KM < config.altitude_km < MAX_ALTITUDE_KM:
        raise ConfigError(
            f"altitude {config.altitude_km} km outside ({MIN_ALTITUDE_KM:g}, {MAX_ALTITUDE_KM:g}) km"
        )
    a = config.semi_major_axis
    inc = np.radians(config.inclination_deg)
    total = config.total
    out = []
    for p in range(config.num_planes):
        raan = 2.0 * np.pi * p / config.num_planes
        for s in range(config.sats_per_plane):
            anomaly = 2.0 * np.pi * s / config.sats_per_plane + 2.0 * np.pi * config.phasing_factor * p / total
            out.append(OrbitalElements(a, 0.0, inc, raan, 0.0, float(np.mod(anomaly, 2.0 * np.pi))))
    return out


def shift_epoch(elements: Sequence[OrbitalElements], raan_offset: float, anomaly_offset: float) -> list[OrbitalElements]:
    """Rigidly rotate a constellation (used to randomise its starting phase)."""
    return [
        replace(
            el,
            raan=float(np.mod(el.raan + raan_offset, 2.0 * np.pi)),
            true_anomaly_epoch=float(np.mod(el.true_anomaly_epoch + anomaly_offset, 2.0 * np.pi)),
        )
        for el in elements
    ]


def _check_time(t) -> None:
    if np.any(np.asarray(t) < 0):
        raise DomainError("propagation time must be non-negative")


def _circular_positions(a, inc, raan, u) -> np.ndarray:
    cu, su = np.cos(u), np.sin(u)
    cr, sr = np.cos(raan), np.sin(raan)
    ci, si = np.cos(inc), np.sin(inc)
    x = a * (cr * cu - sr * su * ci)
    y = a * (sr * cu + cr * su * ci)
    z = a * su * si
    return np.stack([x, y, z], axis=-1)


def propagate(elements: OrbitalElements, t: float) -> np.ndarray:
    """ECI position (km) of a circular orbit after ``t`` seconds."""
    _check_time(t)
    if elements.eccentricity != 0.0:
        raise DomainError("only circular orbits (eccentricity 0) are supported")
    u = elements.arg_perigee + elements.true_anomaly_epoch + elements.mean_motion * t
    return _circular_positions(elements.semi_major_axis, elements.inclination, elements.raan, u)


def eci_to_ecef(r_eci, t: float) -> np.ndarray:
    """Rotate inertial vector(s) into the Earth-fixed frame at time ``t``."""
    theta = EARTH_ROTATION_RAD_S * t
    c, s = np.cos(theta), np.sin(theta)
    r = np.asarray(r_eci, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    return np.stack([c * x + s * y, -s * x + c * y, z], axis=-1)


class Constellation:
    """Array form of a constellation for fast snapshot propagation."""

    def __init__(self, elements: Sequence[OrbitalElements], sats_per_plane: int | None = None):
        if any(el.eccentricity != 0.0 for el in elements):
            raise DomainError("only circular orbits (eccentricity 0) are supported")
        self.elements = list(elements)
        self.a = np.array([el.semi_major_axis for el in elements])
        self.inc = np.array([el.inclination for el in elements])
        self.raan = np.array([el.raan for el in elements])
        self.u0 = np.array([el.arg_perigee + el.true_anomaly_epoch for el in elements])
        self.n = np.sqrt(EARTH_MU_KM3_S2 / self.a**3)
        self.sat_ids = np.arange(len(elements))
        per_plane = sats_per_plane or len(elements)
        self.plane = self.sat_ids // per_plane

    def __len__(self) -> int:
        return len(self.elements)

    def eci_positions(self, t: float) -> np.ndarray:
        _check_time(t)
        return _circular_positions(self.a, self.inc, self.raan, self.u0 + self.n * t)

    def ecef_positions(self, t: float) -> np.ndarray:
        return eci_to_ecef(self.eci_positions(t), t)

    def states(self, t: float) -> list[SatelliteState]:
        pos = self.ecef_positions(t)
        return [SatelliteState(int(i), pos[i], el) for i, el in enumerate(self.elements)]


def geodetic_to_ecef(lat_deg, lon_deg) -> np.ndarray:
    """Spherical-Earth surface position(s) for latitude/longitude in degrees."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    return EARTH_RADIUS_KM * np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    )


def elevation_and_range(sat_ecef, user_ecef) -> tuple[np.ndarray, np.ndarray]:
    """Elevation (deg) and slant range (km) for every user-satellite pair.

    ``sat_ecef`` is (S, 3) and ``user_ecef`` is (U, 3); results are (U, S).
    """
    sat = np.atleast_2d(np.asarray(sat_ecef, dtype=float))
    usr = np.atleast_2d(np.asarray(user_ecef, dtype=float))
    los = sat[None, :, :] - usr[:, None, :]
    rng = np.linalg.norm(los, axis=-1)
    up = usr / np.linalg.norm(usr, axis=-1, keepdims=True)
    sin_el = np.einsum("usk,uk->us", los, up) / rng
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0))), rng


def is_visible(elevation_deg, min_elevation_deg: float = MIN_ELEVATION_DEG):
    return np.asarray(elevation_deg) >= min_elevation_deg - ELEVATION_TOLERANCE_DEG


def compute_geometry(sat: SatelliteState, user_ecef, user_id: int = 0) -> GeometryRecord:
    el, rng = elevation_and_range(sat.ecef_position, user_ecef)
    elevation = float(el[0, 0])
    return GeometryRecord(user_id, sat.sat_id, elevation, float(rng[0, 0]), bool(is_visible(elevation)))


def snapshot_times(count: int = 20, interval_s: float = 30.0) -> np.ndarray:
    return np.arange(count, dtype=float) * interval_s
