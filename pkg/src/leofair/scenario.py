"""User population around a metro centre, categories, demand and best-SINR association."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .categories import CATEGORIES, CATEGORY_INDEX
from .channel import LinkGrid, interference_psd
from .errors import ClassificationError, ConfigError, CoverageGapError
from .orbital import EARTH_RADIUS_KM, geodetic_to_ecef

URBAN_RADIUS_KM = 22.0
SUBURBAN_RADIUS_KM = 55.0
RURAL_RADIUS_KM = 165.0
URBAN_SIGMA_KM = 5.5


@dataclass(frozen=True)
class ScenarioConfig:
    center_lat: float = 40.7
    center_lon: float = -74.0
    num_users: int = 1000
    population_shares: dict = field(default_factory=lambda: {"urban": 0.5, "suburban": 0.2, "rural": 0.3})
    total_bandwidth_hz: float = 300e6
    num_operators: int = 3
    snapshots: int = 20
    snapshot_interval_s: float = 30.0
    samples_per_snapshot: int = 50
    slots_per_snapshot: int = 100
    min_user_bandwidth_hz: float = 2.5e6 / 3
    rng_seed: int = 42
    demand_means: dict = field(default_factory=lambda: {"urban": 1.5, "suburban": 1.2, "rural": 1.0})
    demand_sigma_log: float = 1.5
    equal_demand: bool = False

    def validate(self) -> None:
        if set(self.population_shares) != set(CATEGORIES):
            raise ConfigError(f"population_shares must name exactly {CATEGORIES}")
        if any(v < 0 for v in self.population_shares.values()):
            raise ConfigError("population shares must be non-negative")
        if not math.isclose(sum(self.population_shares.values()), 1.0, abs_tol=1e-9):
            raise ConfigError("population shares must sum to 1")
        if self.num_users <= 0:
            raise ConfigError("num_users must be positive")
        if self.num_operators <= 0:
            raise ConfigError("num_operators must be positive")
        if min(self.snapshots, self.samples_per_snapshot, self.slots_per_snapshot) <= 0:
            raise ConfigError("snapshot, sample and slot counts must be positive")
        if self.snapshot_interval_s < 0:
            raise ConfigError("snapshot_interval_s must be non-negative")
        if self.total_bandwidth_hz <= 0 or self.min_user_bandwidth_hz <= 0:
            raise ConfigError("bandwidths must be positive")
        if self.min_user_bandwidth_hz > self.total_bandwidth_hz:
            raise ConfigError("min_user_bandwidth_hz exceeds total_bandwidth_hz")
        if set(self.demand_means) != set(CATEGORIES) or any(v <= 0 for v in self.demand_means.values()):
            raise ConfigError("demand_means needs a positive mean for every category")
        if self.demand_sigma_log < 0:
            raise ConfigError("demand_sigma_log must be non-negative")

    @property
    def center_ecef(self) -> np.ndarray:
        return geodetic_to_ecef(self.center_lat, self.center_lon)


@dataclass(frozen=True)
class User:
    user_id: int
    latitude: float
    longitude: float
    ecef_position: np.ndarray
    category: str
    demand: float
    operator_id: int

    @property
    def category_idx(self) -> int:
        return CATEGORY_INDEX[self.category]


@dataclass(frozen=True)
class Association:
    user_id: int
    sat_id: int
    beam_id: int
    sinr_at_association: float  # dB


def category_counts(num_users: int, shares: dict) -> dict:
    """Largest-remainder split of ``num_users`` by category share (ties go to list order)."""
    quotas = [num_users * shares[c] for c in CATEGORIES]
    counts = [int(math.floor(q)) for q in quotas]
    left = num_users - sum(counts)
    order = sorted(range(len(CATEGORIES)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return dict(zip(CATEGORIES, counts))


def annulus_radii(rng: np.random.Generator, n: int, r_min: float, r_max: float) -> np.ndarray:
    """Radii uniform in area over an annulus."""
    u = rng.random(n)
    return np.sqrt(r_min**2 + u * (r_max**2 - r_min**2))


def truncated_gaussian_offsets(rng: np.random.Generator, n: int, sigma: float, r_max: float) -> np.ndarray:
    out = np.empty((0, 2))
    while len(out) < n:
        xy = rng.normal(0.0, sigma, size=(2 * (n - len(out)) + 8, 2))
        out = np.vstack([out, xy[np.hypot(xy[:, 0], xy[:, 1]) <= r_max]])
    return out[:n]


def destination_point(lat_deg: float, lon_deg: float, bearing_rad, distance_km):
    """Point reached by travelling ``distance_km`` along a great circle from (lat, lon)."""
    lat1, lon1 = math.radians(lat_deg), math.radians(lon_deg)
    delta = np.asarray(distance_km) / EARTH_RADIUS_KM
    sin_lat2 = np.sin(lat1) * np.cos(delta) + np.cos(lat1) * np.sin(delta) * np.cos(bearing_rad)
    lat2 = np.arcsin(np.clip(sin_lat2, -1, 1))
    lon2 = lon1 + np.arctan2(
        np.sin(bearing_rad) * np.sin(delta) * np.cos(lat1), np.cos(delta) - np.sin(lat1) * sin_lat2
    )
    return np.degrees(lat2), (np.degrees(lon2) + 540.0) % 360.0 - 180.0


def great_circle_km(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def category_for_distance(distance_km: float) -> str:
    if distance_km < 0 or not math.isfinite(distance_km):
        raise ClassificationError(f"invalid distance {distance_km}")
    if distance_km <= URBAN_RADIUS_KM:
        return "urban"
    if distance_km <= SUBURBAN_RADIUS_KM:
        return "suburban"
    if distance_km <= RURAL_RADIUS_KM:
        return "rural"
    raise ClassificationError(f"distance {distance_km:.3f} km is beyond the {RURAL_RADIUS_KM:g} km study area")


def classify(user_position: tuple, center: tuple = (40.7, -74.0)) -> str:
    """Category of a (lat, lon) position by great-circle distance from ``center``."""
    d = float(great_circle_km(center[0], center[1], user_position[0], user_position[1]))
    return category_for_distance(d)


def draw_demand(category: str, rng: np.random.Generator, config: ScenarioConfig | None = None, size=None):
    """Log-normal demand weight whose mean is the configured per-category mean."""
    config = config or ScenarioConfig()
    if config.equal_demand:
        return 1.0 if size is None else np.ones(size)
    sigma = config.demand_sigma_log
    mu = math.log(config.demand_means[category]) - sigma**2 / 2.0
    return rng.lognormal(mu, sigma, size)


def generate_users(config: ScenarioConfig, rng: np.random.Generator) -> list[User]:
    """Draw the population: urban block first, then suburban, then rural."""
    config.validate()
    counts = category_counts(config.num_users, config.population_shares)
    radii, bearings, cats = [], [], []

    n_u = counts["urban"]
    xy = truncated_gaussian_offsets(rng, n_u, URBAN_SIGMA_KM, URBAN_RADIUS_KM)
    radii.append(np.hypot(xy[:, 0], xy[:, 1]))
    bearings.append(np.arctan2(xy[:, 0], xy[:, 1]))
    cats += ["urban"] * n_u
    for cat, r0, r1 in (("suburban", URBAN_RADIUS_KM, SUBURBAN_RADIUS_KM), ("rural", SUBURBAN_RADIUS_KM, RURAL_RADIUS_KM)):
        n = counts[cat]
        bearings.append(rng.random(n) * 2.0 * np.pi)
        radii.append(annulus_radii(rng, n, r0, r1))
        cats += [cat] * n

    radius = np.concatenate(radii)
    bearing = np.concatenate(bearings)
    lat, lon = destination_point(config.center_lat, config.center_lon, bearing, radius)
    ecef = geodetic_to_ecef(lat, lon)
    demand = np.concatenate([
        np.atleast_1d(draw_demand(cat, rng, config, size=counts[cat])) for cat in CATEGORIES
    ])
    return [
        User(i, float(lat[i]), float(lon[i]), ecef[i], cats[i], float(demand[i]), i % config.num_operators)
        for i in range(config.num_users)
    ]


def export_users_csv(users: Sequence[User], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "lat", "lon", "category", "demand", "operator"])
        for u in users:
            w.writerow([u.user_id, f"{u.latitude:.6f}", f"{u.longitude:.6f}", u.category, f"{u.demand:.6f}", u.operator_id])


def active_beams(grid: LinkGrid) -> np.ndarray:
    """Beams that would serve at least one user under an interference-free association."""
    sat_idx, beam_idx, _ = best_links(grid, interference_enabled=False)
    mask = np.zeros(grid.colors.shape, dtype=bool)
    mask[sat_idx, beam_idx] = True
    return mask


def best_links(grid: LinkGrid, interference_enabled: bool, active: np.ndarray | None = None):
    """Index of the best (sat, beam) per user and its fading-free SINR (linear).

    Satellites in the grid are ordered by sat_id, so ``argmax`` returning the first maximum
    gives the lowest sat_id, then lowest beam_id, on ties.
    """
    if np.any(np.diff(grid.sat_ids) <= 0):
        raise ValueError("link grid satellites must be sorted by sat_id")
    no_cover = ~grid.visible.any(axis=1)
    if no_cover.any():
        uid = int(grid.user_ids[np.argmax(no_cover)])
        raise CoverageGapError(uid, f"{int(no_cover.sum())} users uncovered")
    intf = interference_psd(grid, active) if interference_enabled else 0.0
    sinr = grid.rx_psd / (intf + grid.noise_psd)
    sinr = np.where(grid.visible[..., None], sinr, -np.inf)
    flat = sinr.reshape(sinr.shape[0], -1)
    best = np.argmax(flat, axis=1)
    sat_idx, beam_idx = np.unravel_index(best, sinr.shape[1:])
    return sat_idx, beam_idx, flat[np.arange(len(best)), best]


def associate(grid: LinkGrid, interference_enabled: bool = True, active: np.ndarray | None = None) -> list[Association]:
    """Best fading-free SINR association for every user in the grid."""
    if interference_enabled and active is None:
        active = active_beams(grid)
    sat_idx, beam_idx, sinr = best_links(grid, interference_enabled, active)
    return [
        Association(int(grid.user_ids[u]), int(grid.sat_ids[sat_idx[u]]), int(beam_idx[u]), float(10 * np.log10(sinr[u])))
        for u in range(len(sat_idx))
    ]
