"""Downlink link budget, 7-beam layout with 4-colour reuse, SINR and Shannon rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .categories import CATEGORIES
from .errors import DomainError, VisibilityError
from .orbital import GeometryRecord, is_visible

BEAMS_PER_SAT = 7
NUM_COLORS = 4
# beam 0 is the centre, beams 1..6 go round the hexagon
BEAM_COLORS = (0, 1, 2, 3, 1, 2, 3)
HEX_ADJACENCY = tuple((0, k) for k in range(1, 7)) + tuple((k, k % 6 + 1) for k in range(1, 7))


@dataclass(frozen=True)
class LinkBudgetParams:
    carrier_freq_ghz: float = 20.0
    eirp_dbw: float = 45.0
    user_terminal_gain_dbi: float = 30.0
    noise_figure_db: float = 2.0
    g_max_dbi: float = 30.0
    psi_3db_deg: float = 1.5
    sidelobe_floor_db: float = 25.0
    atmospheric_loss_db: float = 0.5
    thermal_noise_dbm_hz: float = -174.0
    beam_pitch_deg: float = 5.0
    shadow_sigma_db: dict = field(default_factory=lambda: {"urban": 8.0, "suburban": 6.0, "rural": 4.0})

    @property
    def carrier_freq_mhz(self) -> float:
        return self.carrier_freq_ghz * 1e3

    @property
    def noise_density_dbw_hz(self) -> float:
        return self.thermal_noise_dbm_hz - 30.0 + self.noise_figure_db

    @property
    def noise_density_w_hz(self) -> float:
        return 10.0 ** (self.noise_density_dbw_hz / 10.0)

    def sigma_for(self, category: str) -> float:
        return float(self.shadow_sigma_db[category])

    def transmit_psd_w_hz(self, total_bandwidth_hz: float) -> float:
        """Beam EIRP spread flat over one colour sub-band."""
        return 10.0 ** (self.eirp_dbw / 10.0) / (total_bandwidth_hz / NUM_COLORS)


DEFAULT_PARAMS = LinkBudgetParams()


def _linear_column(high: float, low: float, nodes: Sequence[float]) -> tuple:
    lo_el, hi_el = nodes[0], nodes[-1]
    return tuple(float(high + (low - high) * (e - lo_el) / (hi_el - lo_el)) for e in nodes)


CLUTTER_NODES_DEG = tuple(float(e) for e in range(10, 91, 10))


@dataclass(frozen=True)
class ClutterTable:
    """Clutter loss per category at 10-degree elevation nodes, interpolated linearly."""

    values: dict
    nodes_deg: tuple = CLUTTER_NODES_DEG

    def __post_init__(self):
        if set(self.values) != set(CATEGORIES):
            raise DomainError(f"clutter table needs exactly {CATEGORIES}")
        for cat in CATEGORIES:
            col = np.asarray(self.values[cat], dtype=float)
            if col.shape != (len(self.nodes_deg),):
                raise DomainError(f"clutter column {cat!r} needs {len(self.nodes_deg)} entries")
            if np.any(np.diff(col) > 0):
                raise DomainError(f"clutter loss for {cat!r} must not increase with elevation")
        u, s, r = (np.asarray(self.values[c], dtype=float) for c in CATEGORIES)
        if np.any(u < s) or np.any(s < r):
            raise DomainError("clutter must be ordered urban >= suburban >= rural at every node")

    @classmethod
    def default(cls) -> "ClutterTable":
        return cls.from_endpoints({"urban": (34.0, 12.0), "suburban": (19.0, 7.0), "rural": (9.0, 3.0)})

    @classmethod
    def from_endpoints(cls, endpoints: dict) -> "ClutterTable":
        return cls({c: _linear_column(*endpoints[c], CLUTTER_NODES_DEG) for c in CATEGORIES})

    @classmethod
    def zero(cls) -> "ClutterTable":
        return cls({c: (0.0,) * len(CLUTTER_NODES_DEG) for c in CATEGORIES})

    def loss(self, category: str, elevation_deg) -> np.ndarray | float:
        out = np.interp(elevation_deg, self.nodes_deg, self.values[category])
        return float(out) if np.ndim(out) == 0 else out

    def matrix(self, category_idx: np.ndarray, elevation_deg: np.ndarray) -> np.ndarray:
        """Clutter for a (U, S) elevation matrix given per-user category indices."""
        out = np.empty_like(elevation_deg, dtype=float)
        for i, cat in enumerate(CATEGORIES):
            rows = category_idx == i
            if rows.any():
                out[rows] = np.interp(elevation_deg[rows], self.nodes_deg, self.values[cat])
        return out


# ---------------------------------------------------------------------------
# elementary terms


def beam_gain(psi_deg, params: LinkBudgetParams = DEFAULT_PARAMS):
    """Parabolic main lobe clamped at the sidelobe floor (dBi)."""
    psi = np.asarray(psi_deg, dtype=float)
    if np.any(psi < 0) or np.any(np.isnan(psi)):
        raise DomainError("off-axis angle must be non-negative")
    g = np.maximum(
        params.g_max_dbi - 12.0 * (psi / params.psi_3db_deg) ** 2,
        params.g_max_dbi - params.sidelobe_floor_db,
    )
    return float(g) if g.ndim == 0 else g


def free_space_path_loss(distance_km, freq_mhz):
    d = np.asarray(distance_km, dtype=float)
    f = np.asarray(freq_mhz, dtype=float)
    if np.any(d <= 0) or np.any(f <= 0):
        raise DomainError("distance and frequency must be positive")
    out = 32.45 + 20.0 * np.log10(f) + 20.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def draw_shadow_fading(category: str, rng: np.random.Generator, params: LinkBudgetParams = DEFAULT_PARAMS, size=None):
    """Zero-mean log-normal shadowing in dB."""
    sigma = params.sigma_for(category)
    z = rng.standard_normal(size)
    return sigma * z


def shannon_rate(bandwidth_hz, sinr_linear):
    b = np.asarray(bandwidth_hz, dtype=float)
    if np.any(b < 0):
        raise DomainError("bandwidth must be non-negative")
    out = b * np.log2(1.0 + np.asarray(sinr_linear, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


# ---------------------------------------------------------------------------
# beams


@dataclass(frozen=True)
class Beam:
    sat_id: int
    beam_id: int
    boresight: np.ndarray
    color: int


def assign_beam_colors(num_beams: int = BEAMS_PER_SAT, adjacency=HEX_ADJACENCY) -> tuple:
    """Colour the hexagonal 7-beam layout so neighbours never share a sub-band."""
    if num_beams != BEAMS_PER_SAT:
        raise DomainError("the reuse pattern is defined for the 7-beam hexagon only")
    colors = BEAM_COLORS
    for a, b in adjacency:
        assert colors[a] != colors[b]
    return colors


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def beam_boresights(sat_ecef, steer_mask, target_ecef, pitch_deg: float) -> np.ndarray:
    """Boresight unit vectors (S, 7, 3).

    Steered satellites aim the centre beam at ``target_ecef``; the others point at nadir.
    Outer beams sit ``pitch_deg`` off the centre beam at 60-degree azimuth steps.
    """
    sat = np.atleast_2d(np.asarray(sat_ecef, dtype=float))
    steer = np.broadcast_to(np.asarray(steer_mask, dtype=bool), sat.shape[:1])
    nadir = _unit(-sat)
    if target_ecef is None:
        centre = nadir
    else:
        centre = np.where(steer[:, None], _unit(np.asarray(target_ecef, dtype=float) - sat), nadir)
    ref = np.where(np.abs(centre[:, 2:3]) > 0.999, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    e1 = _unit(np.cross(centre, ref))
    e2 = np.cross(centre, e1)
    off = np.radians(pitch_deg)
    beams = [centre]
    for k in range(6):
        az = k * np.pi / 3.0
        beams.append(np.cos(off) * centre + np.sin(off) * (np.cos(az) * e1 + np.sin(az) * e2))
    return _unit(np.stack(beams, axis=1))


def build_beams(sat_id: int, sat_ecef, params: LinkBudgetParams = DEFAULT_PARAMS, target_ecef=None) -> list[Beam]:
    bs = beam_boresights(sat_ecef, target_ecef is not None, target_ecef, params.beam_pitch_deg)[0]
    colors = assign_beam_colors()
    return [Beam(sat_id, b, bs[b], colors[b]) for b in range(BEAMS_PER_SAT)]


def select_steered_satellites(elevation_at_centre, operator_ids, num_operators: int, min_elevation_deg: float = 10.0) -> np.ndarray:
    """Per operator, the highest satellite above the metro centre serves it with a steered cluster."""
    el = np.asarray(elevation_at_centre, dtype=float)
    ops = np.asarray(operator_ids)
    mask = np.zeros(el.shape, dtype=bool)
    for op in range(num_operators):
        cand = np.flatnonzero((ops == op) & (el >= min_elevation_deg))
        if cand.size:
            mask[cand[np.argmax(el[cand])]] = True
    return mask


def off_axis_angles(boresights, sat_ecef, user_ecef) -> np.ndarray:
    """Angle (deg) at each satellite between every beam boresight and each user: (U, S, B)."""
    sat = np.atleast_2d(np.asarray(sat_ecef, dtype=float))
    usr = np.atleast_2d(np.asarray(user_ecef, dtype=float))
    bs = np.asarray(boresights, dtype=float).reshape(sat.shape[0], -1, 3)
    to_user = _unit(usr[:, None, :] - sat[None, :, :])
    cosang = np.einsum("usk,sbk->usb", to_user, bs)
    return np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# single-link API


@dataclass(frozen=True)
class ChannelRealization:
    user_id: int
    serving_sat: int
    serving_beam: int
    beam_gain: float
    path_loss: float
    clutter_loss: float
    shadow_fading: float
    atmospheric_loss: float = 0.0
    terminal_gain: float = 0.0
    snr: float = float("nan")
    sinr: float = float("nan")
    interference_power: float = 0.0
    color: int = 0

    @property
    def gain_db(self) -> float:
        """Channel power gain |h|^2 in dB, shadowing included."""
        return (
            self.beam_gain + self.terminal_gain - self.path_loss - self.clutter_loss
            - self.atmospheric_loss + self.shadow_fading
        )

    @property
    def mean_gain_db(self) -> float:
        return self.gain_db - self.shadow_fading


@dataclass(frozen=True)
class BeamLink:
    """Fading-free channel gain from one beam to the user under study."""

    sat_id: int
    beam_id: int
    color: int
    gain_db: float


def compute_channel_gain(
    geom: GeometryRecord,
    beam: Beam,
    category: str,
    params: LinkBudgetParams,
    clutter: ClutterTable,
    sat_ecef,
    user_ecef,
    rng: np.random.Generator | None = None,
) -> ChannelRealization:
    if not geom.visible:
        raise VisibilityError(f"satellite {geom.sat_id} is below the elevation mask for user {geom.user_id}")
    psi = off_axis_angles(beam.boresight[None, :], sat_ecef, user_ecef)[0, 0, 0]
    shadow = 0.0 if rng is None else float(draw_shadow_fading(category, rng, params))
    return ChannelRealization(
        user_id=geom.user_id,
        serving_sat=beam.sat_id,
        serving_beam=beam.beam_id,
        beam_gain=beam_gain(psi, params),
        path_loss=free_space_path_loss(geom.slant_range, params.carrier_freq_mhz),
        clutter_loss=float(clutter.loss(category, geom.elevation)),
        shadow_fading=shadow,
        atmospheric_loss=params.atmospheric_loss_db,
        terminal_gain=params.user_terminal_gain_dbi,
        color=beam.color,
    )


def interferer_set(serving: ChannelRealization, links: Iterable[BeamLink]) -> list[BeamLink]:
    """Co-channel beams other than the serving one."""
    return [
        ln for ln in links
        if ln.color == serving.color and (ln.sat_id, ln.beam_id) != (serving.serving_sat, serving.serving_beam)
    ]


def compute_sinr(
    serving: ChannelRealization,
    links: Iterable[BeamLink],
    allocation_bandwidth_hz: float,
    params: LinkBudgetParams = DEFAULT_PARAMS,
    total_bandwidth_hz: float = 300e6,
    interference_enabled: bool = True,
) -> ChannelRealization:
    """Fill in SNR, SINR (dB) and interference power (W) for a served user.

    Transmit power scales with the user's share of the sub-band, so ``allocation_bandwidth_hz``
    cancels out of the ratio but sets the absolute interference and noise powers.
    """
    if allocation_bandwidth_hz <= 0:
        raise DomainError("allocation bandwidth must be positive")
    tx_power = params.transmit_psd_w_hz(total_bandwidth_hz) * allocation_bandwidth_hz
    signal = tx_power * db_to_linear(serving.gain_db)
    noise = params.noise_density_w_hz * allocation_bandwidth_hz
    interference = 0.0
    if interference_enabled:
        # fsum keeps the total independent of the order links arrive in
        interference = math.fsum(tx_power * 10.0 ** (ln.gain_db / 10.0) for ln in interferer_set(serving, links))
    snr = signal / noise
    sinr = signal / (interference + noise)
    return replace(serving, snr=float(linear_to_db(snr)), sinr=float(linear_to_db(sinr)), interference_power=interference)


# ---------------------------------------------------------------------------
# vectorised grid used by the engine


@dataclass
class LinkGrid:
    """Fading-free link budget between U users and S satellites x 7 beams."""

    user_ids: np.ndarray  # (U,)
    sat_ids: np.ndarray  # (S,)
    elevation: np.ndarray  # (U, S) deg
    slant_range: np.ndarray  # (U, S) km
    visible: np.ndarray  # (U, S)
    beam_gain_db: np.ndarray  # (U, S, B)
    path_loss_db: np.ndarray  # (U, S)
    clutter_db: np.ndarray  # (U, S)
    colors: np.ndarray  # (S, B)
    gain_db: np.ndarray  # (U, S, B) beam + terminal - losses, no shadowing
    rx_psd: np.ndarray  # (U, S, B) received PSD in W/Hz, zero where invisible
    noise_psd: float

    @property
    def shape(self):
        return self.rx_psd.shape


def compute_link_grid(
    user_ids,
    user_ecef,
    category_idx,
    sat_ids,
    sat_ecef,
    boresights,
    params: LinkBudgetParams,
    clutter: ClutterTable,
    total_bandwidth_hz: float,
    elevation=None,
    slant_range=None,
    min_elevation_deg: float = 10.0,
) -> LinkGrid:
    from .orbital import elevation_and_range

    if elevation is None or slant_range is None:
        elevation, slant_range = elevation_and_range(sat_ecef, user_ecef)
    visible = is_visible(elevation, min_elevation_deg)
    psi = off_axis_angles(boresights, sat_ecef, user_ecef)
    g_beam = beam_gain(psi, params)
    fspl = free_space_path_loss(slant_range, params.carrier_freq_mhz)
    clut = clutter.matrix(np.asarray(category_idx), elevation)
    gain = g_beam + (params.user_terminal_gain_dbi - fspl - clut - params.atmospheric_loss_db)[..., None]
    rx = params.transmit_psd_w_hz(total_bandwidth_hz) * db_to_linear(gain) * visible[..., None]
    colors = np.tile(np.array(assign_beam_colors()), (len(sat_ids), 1))
    return LinkGrid(
        user_ids=np.asarray(user_ids),
        sat_ids=np.asarray(sat_ids),
        elevation=elevation,
        slant_range=slant_range,
        visible=visible,
        beam_gain_db=g_beam,
        path_loss_db=fspl,
        clutter_db=clut,
        colors=colors,
        gain_db=gain,
        rx_psd=rx,
        noise_psd=params.noise_density_w_hz,
    )


def interference_psd(grid: LinkGrid, active: np.ndarray | None = None) -> np.ndarray:
    """Co-channel interference PSD a user would see if served by each (sat, beam): (U, S, B).

    ``active`` (S, B) restricts the interferers to beams that actually transmit.
    """
    mask = np.ones(grid.colors.shape, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    rx_on = grid.rx_psd * mask[None]
    per_color = np.stack([(rx_on * (grid.colors == c)[None]).sum(axis=(1, 2)) for c in range(NUM_COLORS)], axis=1)
    total = per_color[:, grid.colors]  # (U, S, B)
    return np.maximum(total - rx_on, 0.0)


AUDIT_FIELDS = (
    "user_id", "sat_id", "beam_id", "color", "elevation_deg", "slant_range_km", "beam_gain_db",
    "terminal_gain_db", "path_loss_db", "clutter_db", "atmospheric_db", "channel_gain_db", "snr_db",
    "interference_psd_w_hz", "sinr_db",
)


def write_link_audit(path, grid: LinkGrid, params: LinkBudgetParams, active=None, interference_enabled=True) -> int:
    """Dump every visible user-beam pair with its dB decomposition. Returns the row count."""
    intf = interference_psd(grid, active) if interference_enabled else np.zeros_like(grid.rx_psd)
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AUDIT_FIELDS)
        for ui, si in zip(*np.nonzero(grid.visible)):
            for b in range(grid.colors.shape[1]):
                rx = grid.rx_psd[ui, si, b]
                w.writerow([
                    int(grid.user_ids[ui]), int(grid.sat_ids[si]), b, int(grid.colors[si, b]),
                    f"{grid.elevation[ui, si]:.6f}", f"{grid.slant_range[ui, si]:.6f}",
                    f"{grid.beam_gain_db[ui, si, b]:.6f}", f"{params.user_terminal_gain_dbi:.6f}",
                    f"{grid.path_loss_db[ui, si]:.6f}", f"{grid.clutter_db[ui, si]:.6f}",
                    f"{params.atmospheric_loss_db:.6f}", f"{grid.gain_db[ui, si, b]:.6f}",
                    f"{linear_to_db(rx / grid.noise_psd):.6f}", f"{intf[ui, si, b]:.6e}",
                    f"{linear_to_db(rx / (intf[ui, si, b] + grid.noise_psd)):.6f}",
                ])
                rows += 1
    return rows
