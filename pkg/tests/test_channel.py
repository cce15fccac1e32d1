from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leofair.channel import (
    BEAM_COLORS,
    HEX_ADJACENCY,
    BeamLink,
    ClutterTable,
    LinkBudgetParams,
    assign_beam_colors,
    beam_boresights,
    beam_gain,
    build_beams,
    compute_channel_gain,
    compute_link_grid,
    compute_sinr,
    db_to_linear,
    draw_shadow_fading,
    free_space_path_loss,
    interference_psd,
    interferer_set,
    off_axis_angles,
    select_steered_satellites,
    shannon_rate,
    write_link_audit,
)
from leofair.errors import DomainError, VisibilityError
from leofair.orbital import EARTH_RADIUS_KM, GeometryRecord, compute_geometry, SatelliteState, OrbitalElements

PARAMS = LinkBudgetParams()
QUIET = replace(PARAMS, atmospheric_loss_db=0.0, shadow_sigma_db={"urban": 0.0, "suburban": 0.0, "rural": 0.0})
USER = np.array([EARTH_RADIUS_KM, 0.0, 0.0])
ZENITH_SAT = np.array([EARTH_RADIUS_KM + 550.0, 0.0, 0.0])
DUMMY_ELEMENTS = OrbitalElements(EARTH_RADIUS_KM + 550.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("psi, expected", [(0.0, 30.0), (1.5, 18.0), (10.0, 5.0), (90.0, 5.0)])
def test_beam_gain_values(psi, expected):
    assert beam_gain(psi) == pytest.approx(expected, abs=1e-12)


def test_beam_gain_rejects_negative():
    with pytest.raises(DomainError):
        beam_gain(-0.1)


@pytest.mark.parametrize(
    "d, f, expected",
    [(1.0, 1.0, 32.45), (550.0, 20000.0, 173.28), (1932.0, 20000.0, 184.19)],
)
def test_fspl_values(d, f, expected):
    assert free_space_path_loss(d, f) == pytest.approx(expected, abs=0.01)


@pytest.mark.parametrize("d, f", [(0.0, 1.0), (1.0, 0.0), (-5.0, 2e4)])
def test_fspl_rejects_non_positive(d, f):
    with pytest.raises(DomainError):
        free_space_path_loss(d, f)


def test_shadow_zero_sigma():
    p = replace(PARAMS, shadow_sigma_db={"urban": 0.0, "suburban": 0.0, "rural": 0.0})
    draws = draw_shadow_fading("urban", np.random.default_rng(0), p, size=1000)
    assert np.all(draws == 0.0)


def test_shadow_statistics():
    rng = np.random.default_rng(2024)
    urban = draw_shadow_fading("urban", rng, size=100_000)
    rural = draw_shadow_fading("rural", rng, size=100_000)
    assert 7.9 <= urban.std() <= 8.1
    assert -0.05 <= rural.mean() <= 0.05


def test_shannon_rate_values():
    assert shannon_rate(0.0, 50.0) == 0.0
    assert shannon_rate(1.0, 1.0) == 1.0
    assert shannon_rate(10e6, 1e3) == pytest.approx(99.67e6, rel=1e-4)
    with pytest.raises(DomainError):
        shannon_rate(-1.0, 1.0)


def _zenith_link(params=QUIET, clutter=None, rng=None, category="urban"):
    sat = SatelliteState(0, ZENITH_SAT, DUMMY_ELEMENTS)
    geom = compute_geometry(sat, USER)
    beam = build_beams(0, ZENITH_SAT, params)[0]
    return compute_channel_gain(geom, beam, category, params, clutter or ClutterTable.zero(), ZENITH_SAT, USER, rng)


def test_zenith_channel_gain():
    link = _zenith_link()
    assert link.gain_db == pytest.approx(-113.28, abs=0.01)
    assert link.beam_gain == pytest.approx(30.0)


def test_channel_gain_deterministic_without_shadowing():
    a = _zenith_link(rng=np.random.default_rng(1))
    b = _zenith_link(rng=np.random.default_rng(99))
    assert a == b


def test_channel_gain_keeps_terms_separate():
    link = _zenith_link(PARAMS, ClutterTable.default(), np.random.default_rng(5))
    total = (
        link.beam_gain + link.terminal_gain - link.path_loss - link.clutter_loss - link.atmospheric_loss + link.shadow_fading
    )
    assert link.gain_db == pytest.approx(total)
    assert link.clutter_loss == pytest.approx(12.0)
    assert link.shadow_fading != 0.0


def test_invisible_link_rejected():
    geom = GeometryRecord(0, 0, 5.0, 2500.0, False)
    beam = build_beams(0, ZENITH_SAT)[0]
    with pytest.raises(VisibilityError):
        compute_channel_gain(geom, beam, "urban", PARAMS, ClutterTable.default(), ZENITH_SAT, USER)


def test_urban_clutter_exceeds_rural():
    table = ClutterTable.default()
    assert table.loss("urban", 30.0) > table.loss("rural", 30.0)
    assert table.loss("urban", 10.0) == pytest.approx(34.0)
    assert table.loss("suburban", 90.0) == pytest.approx(7.0)
    assert table.loss("rural", 50.0) == pytest.approx(6.0)


def test_clutter_table_validation():
    good = ClutterTable.default().values
    with pytest.raises(DomainError):
        ClutterTable({**good, "urban": tuple(reversed(good["urban"]))})
    with pytest.raises(DomainError):
        ClutterTable({**good, "rural": good["urban"]})
    with pytest.raises(DomainError):
        ClutterTable({"urban": good["urban"]})


def test_beam_colouring():
    colors = assign_beam_colors()
    assert colors[0] == 0
    assert set(colors) == {0, 1, 2, 3}
    assert all(colors[a] != colors[b] for a, b in HEX_ADJACENCY)
    assert assign_beam_colors() == colors
    with pytest.raises(DomainError):
        assign_beam_colors(6)


def test_co_channel_fraction_near_quarter():
    # probability two beams drawn from a large constellation share a colour
    counts = np.bincount(np.tile(BEAM_COLORS, 1584), minlength=4)
    fraction = float(np.sum((counts / counts.sum()) ** 2))
    assert fraction == pytest.approx(13 / 49)
    assert abs(fraction - 0.25) < 0.02


def test_boresight_layout():
    bs = beam_boresights(ZENITH_SAT, False, None, PARAMS.beam_pitch_deg)[0]
    assert np.allclose(bs[0], [-1.0, 0.0, 0.0])
    angles = np.degrees(np.arccos(np.clip(bs[1:] @ bs[0], -1, 1)))
    assert np.allclose(angles, PARAMS.beam_pitch_deg)
    assert np.allclose(np.linalg.norm(bs, axis=1), 1.0)


def test_steered_boresight_points_at_target():
    sat = np.array([EARTH_RADIUS_KM + 550.0, 400.0, 0.0])
    bs = beam_boresights(sat, True, USER, 5.0)
    psi = off_axis_angles(bs, sat, USER)
    assert psi[0, 0, 0] == pytest.approx(0.0, abs=1e-6)


def test_steering_picks_highest_per_operator():
    el = np.array([20.0, 60.0, 5.0, 45.0, 80.0, 30.0])
    ops = np.array([0, 0, 1, 1, 2, 2])
    assert select_steered_satellites(el, ops, 3).tolist() == [False, True, False, True, True, False]
    assert not select_steered_satellites(np.array([5.0]), np.array([0]), 1).any()


def _serving(color=0):
    link = _zenith_link()
    return replace(link, color=color)


def test_sinr_equals_snr_without_interference():
    links = [BeamLink(1, 0, 0, -120.0), BeamLink(2, 3, 0, -118.0)]
    out = compute_sinr(_serving(), links, 1e6, QUIET, interference_enabled=False)
    assert out.sinr == out.snr
    assert out.interference_power == 0.0


def test_snr_value_by_hand():
    out = compute_sinr(_serving(), [], 1e6, QUIET)
    eirp_w = 10 ** 4.5
    tx = eirp_w / 75e6 * 1e6
    noise = 10 ** ((-174 - 30 + 2) / 10) * 1e6
    expected = 10 * math.log10(tx * 10 ** (-113.28 / 10) / noise)
    assert out.snr == pytest.approx(expected, abs=0.01)
    assert out.sinr == out.snr


def test_single_satellite_other_colours_do_not_interfere():
    serving = _serving(color=0)
    same_sat = [BeamLink(0, b, BEAM_COLORS[b], -115.0) for b in range(1, 7)]
    assert interferer_set(serving, same_sat) == []
    out = compute_sinr(serving, same_sat, 1e6, QUIET)
    assert out.sinr == out.snr


def test_interferer_set_excludes_serving_beam():
    serving = _serving(color=0)
    links = [BeamLink(0, 0, 0, -113.0), BeamLink(4, 0, 0, -130.0), BeamLink(4, 1, 1, -125.0)]
    assert interferer_set(serving, links) == [BeamLink(4, 0, 0, -130.0)]


def test_sinr_rejects_zero_bandwidth():
    with pytest.raises(DomainError):
        compute_sinr(_serving(), [], 0.0, QUIET)


def _ring_positions(num_sats=6):
    rng = np.random.default_rng(3)
    a = EARTH_RADIUS_KM + 550.0
    lon, lat = rng.uniform(-0.05, 0.05, size=(2, num_sats))
    return a * np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def _ring_scene(num_sats=6):
    """A handful of nadir-pointing satellites around two nearby users."""
    sats = _ring_positions(num_sats)
    users = np.array([USER, [EARTH_RADIUS_KM * math.cos(0.01), EARTH_RADIUS_KM * math.sin(0.01), 0.0]])
    bs = beam_boresights(sats, np.zeros(num_sats, bool), None, PARAMS.beam_pitch_deg)
    return compute_link_grid([0, 1], users, np.array([0, 2]), np.arange(num_sats), sats, bs, PARAMS, ClutterTable.default(), 300e6)


def test_grid_matches_single_link_api():
    grid = _ring_scene()
    pos = _ring_positions()[0]
    geom = compute_geometry(SatelliteState(0, pos, DUMMY_ELEMENTS), USER)
    beam = build_beams(0, pos, PARAMS)[2]
    link = compute_channel_gain(geom, beam, "urban", PARAMS, ClutterTable.default(), pos, USER)
    assert link.gain_db == pytest.approx(grid.gain_db[0, 0, 2], abs=1e-9)


def test_grid_interference_matches_explicit_sum():
    grid = _ring_scene()
    intf = interference_psd(grid)
    u, s, b = 0, 1, 3
    colour = grid.colors[s, b]
    manual = math.fsum(
        float(grid.rx_psd[u, s2, b2])
        for s2 in range(grid.shape[1]) for b2 in range(grid.shape[2])
        if grid.colors[s2, b2] == colour and (s2, b2) != (s, b)
    )
    assert intf[u, s, b] == pytest.approx(manual, rel=1e-9)


def test_grid_active_mask_removes_interferers():
    grid = _ring_scene()
    none_active = np.zeros(grid.colors.shape, dtype=bool)
    assert np.all(interference_psd(grid, none_active) == 0.0)


def test_link_audit(tmp_path):
    grid = _ring_scene(3)
    path = tmp_path / "links.csv"
    rows = write_link_audit(path, grid, PARAMS)
    lines = path.read_text().splitlines()
    assert len(lines) == rows + 1
    assert lines[0].startswith("user_id,sat_id,beam_id")
    assert rows == int(grid.visible.sum()) * 7


psi_values = st.floats(min_value=0.0, max_value=180.0, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(a=psi_values, b=psi_values)
def test_beam_gain_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert beam_gain(lo) >= beam_gain(hi)
    assert 5.0 <= beam_gain(a) <= 30.0


@settings(max_examples=100, deadline=None)
@given(d=st.floats(1.0, 1e5), f=st.floats(1.0, 1e5), k=st.floats(1.001, 10.0))
def test_fspl_strictly_increasing(d, f, k):
    base = free_space_path_loss(d, f)
    assert free_space_path_loss(d * k, f) > base
    assert free_space_path_loss(d, f * k) > base


@settings(max_examples=100, deadline=None)
@given(
    psi=st.floats(0.0, 20.0),
    d=st.floats(550.0, 3000.0),
    clutter=st.floats(0.0, 40.0),
    shadow=st.floats(-30.0, 30.0),
    atmo=st.floats(0.0, 3.0),
)
def test_db_sum_equals_linear_product(psi, d, clutter, shadow, atmo):
    g = beam_gain(psi)
    fspl = free_space_path_loss(d, 2e4)
    db_total = g + 30.0 - fspl - clutter - atmo + shadow
    linear = db_to_linear(g) * db_to_linear(30.0) / db_to_linear(fspl) / db_to_linear(clutter) / db_to_linear(atmo) * db_to_linear(shadow)
    assert float(linear) == pytest.approx(float(db_to_linear(db_total)), rel=1e-9)


link_lists = st.lists(
    st.tuples(st.integers(0, 20), st.integers(0, 6), st.floats(-160.0, -100.0)), min_size=0, max_size=15
)


@settings(max_examples=100, deadline=None)
@given(raw=link_lists, bandwidth=st.floats(1e3, 300e6), drop=st.integers(0, 14))
def test_interference_only_lowers_sinr(raw, bandwidth, drop):
    serving = _serving(color=0)
    links = [BeamLink(s, b, BEAM_COLORS[b], g) for s, b, g in raw]
    with_i = compute_sinr(serving, links, bandwidth, QUIET)
    without = compute_sinr(serving, links, bandwidth, QUIET, interference_enabled=False)
    assert with_i.sinr <= with_i.snr
    assert with_i.sinr <= without.sinr
    if links:
        fewer = links[: drop % len(links)] + links[drop % len(links) + 1:]
        assert compute_sinr(serving, fewer, bandwidth, QUIET).sinr >= with_i.sinr
    for ln in interferer_set(serving, links):
        assert ln.color == serving.color
        assert (ln.sat_id, ln.beam_id) != (serving.serving_sat, serving.serving_beam)


@settings(max_examples=50, deadline=None)
@given(raw=link_lists, seed=st.integers(0, 1000))
def test_interference_independent_of_link_order(raw, seed):
    serving = _serving(color=0)
    links = [BeamLink(s, b, BEAM_COLORS[b], g) for s, b, g in raw]
    shuffled = list(links)
    np.random.default_rng(seed).shuffle(shuffled)
    a = compute_sinr(serving, links, 1e6, QUIET)
    b = compute_sinr(serving, shuffled, 1e6, QUIET)
    assert a.interference_power == b.interference_power
