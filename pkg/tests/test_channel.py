import math

import numpy as np
import pytest

from core.beamforming import build_codebook
from core.channel import (
    NO_SIGNAL_SNR_DB,
    ArrayGeometry,
    LinkBudget,
    Path,
    array_response,
    assemble_channel,
    beam_snr_db,
    beam_vector,
    paths_frame,
    rate,
    snr,
)
from core.errors import ConfigError, DeepOutageError

GEOM = ArrayGeometry()
BUDGET = LinkBudget()


def naive_channel(paths, geom):
    h = np.zeros(geom.size, dtype=complex)
    for p in paths:
        az, el = math.radians(p.azimuth_deg), math.radians(p.elevation_deg)
        for m in range(geom.rows):
            for n in range(geom.cols):
                phase = 2 * math.pi * geom.spacing * (m * math.sin(el) + n * math.cos(el) * math.sin(az))
                h[m * geom.cols + n] += p.gain * complex(math.cos(phase), -math.sin(phase))
    return h


# ----------------------------
# Steering vectors
# ----------------------------
def test_broadside_response_is_all_ones():
    a = array_response(0.0, 0.0, GEOM)
    np.testing.assert_allclose(a, np.ones(64))
    assert np.vdot(a, a).real == pytest.approx(64.0, abs=1e-12)


def test_response_entries_have_unit_magnitude():
    rng = np.random.default_rng(0)
    for az, el in rng.uniform(-80, 80, size=(20, 2)):
        np.testing.assert_allclose(np.abs(array_response(az, el, GEOM)), 1.0, atol=1e-12)
        assert np.linalg.norm(beam_vector(az, el, GEOM)) == pytest.approx(1.0, abs=1e-12)


def test_noise_power_is_minus_94_dbm():
    assert BUDGET.noise_power_dbm == pytest.approx(-94.0, abs=1e-12)


def test_array_geometry_validation():
    with pytest.raises(ConfigError):
        ArrayGeometry(rows=0)
    with pytest.raises(ConfigError):
        ArrayGeometry(spacing=0.0)


# ----------------------------
# Channel assembly
# ----------------------------
def test_single_broadside_path_gives_all_ones():
    h = assemble_channel([Path(1.0 + 0j, 0.0, 0.0)], GEOM)
    np.testing.assert_allclose(h, np.ones(64))


def test_opposite_paths_cancel():
    h = assemble_channel([Path(0.3 + 0.4j, 20.0, 5.0), Path(-0.3 - 0.4j, 20.0, 5.0)], GEOM)
    np.testing.assert_allclose(h, 0.0, atol=1e-15)


def test_assembly_matches_naive_summation():
    rng = np.random.default_rng(7)
    for _ in range(10):
        paths = [
            Path(complex(*rng.normal(size=2)), *rng.uniform(-60, 60, size=2))
            for _ in range(3)
        ]
        np.testing.assert_allclose(assemble_channel(paths, GEOM), naive_channel(paths, GEOM), atol=1e-12)


def test_assembly_is_linear_in_paths():
    p1, p2 = Path(0.5j, -30.0, 10.0), Path(1e-3 + 0j, 45.0, -5.0)
    np.testing.assert_allclose(
        assemble_channel([p1, p2], GEOM),
        assemble_channel([p1], GEOM) + assemble_channel([p2], GEOM),
        atol=1e-15,
    )


def test_fading_rotates_phase_only():
    path = Path.from_loss(60.0, 0.0, 0.0)
    h = assemble_channel([path], GEOM, fading_rng=np.random.default_rng(3))
    np.testing.assert_allclose(np.abs(h), 1e-3, rtol=1e-12)
    np.testing.assert_allclose(h, h[0])


def test_no_paths_is_a_deep_outage():
    with pytest.raises(DeepOutageError):
        assemble_channel([], GEOM)


def test_zero_gain_path_is_rejected():
    with pytest.raises(ConfigError):
        Path(0j, 0.0, 0.0)


# ----------------------------
# SNR and rate
# ----------------------------
def test_aligned_beam_snr_follows_link_budget():
    h = assemble_channel([Path.from_loss(80.0, 30.0, 10.0)], GEOM)
    value = snr(h, beam_vector(30.0, 10.0, GEOM), BUDGET)
    expected = 10.0 - 80.0 + 10.0 * math.log10(64) + 94.0
    assert value == pytest.approx(expected, abs=1e-9)
    assert value == pytest.approx(42.06, abs=5e-3)


def test_orthogonal_beam_gives_no_signal():
    h = assemble_channel([Path(1.0 + 0j, 0.0, 0.0)], GEOM)
    null = math.degrees(math.asin(0.25))
    assert snr(h, beam_vector(null, 0.0, GEOM), BUDGET) == NO_SIGNAL_SNR_DB
    assert rate(NO_SIGNAL_SNR_DB) == 0.0


def test_scaling_channel_by_ten_adds_20_db():
    h = assemble_channel([Path.from_loss(70.0, 12.0, -3.0), Path.from_loss(85.0, -20.0, 4.0)], GEOM)
    f = beam_vector(10.0, -5.0, GEOM)
    assert snr(10.0 * h, f, BUDGET) - snr(h, f, BUDGET) == pytest.approx(20.0, abs=1e-9)


def test_snr_ignores_global_phase():
    h = assemble_channel([Path.from_loss(75.0, 25.0, 0.0)], GEOM)
    f = beam_vector(20.0, 5.0, GEOM)
    assert snr(h * np.exp(1.1j), f, BUDGET) == pytest.approx(snr(h, f, BUDGET), abs=1e-9)
    assert snr(h, f * np.exp(-0.4j), BUDGET) == pytest.approx(snr(h, f, BUDGET), abs=1e-9)


def test_snr_requires_unit_norm_beam():
    h = np.ones(64, dtype=complex)
    with pytest.raises(ValueError):
        snr(h, 2.0 * beam_vector(0.0, 0.0, GEOM), BUDGET)


def test_batched_snr_matches_single_beam():
    h = assemble_channel([Path.from_loss(78.0, -15.0, 8.0)], GEOM)
    codebook = build_codebook(GEOM, resolution=10.0)
    batched = beam_snr_db(h, codebook.beams, BUDGET)
    for k in range(len(codebook)):
        assert batched[k] == pytest.approx(snr(h, codebook.beams[k], BUDGET), abs=1e-9)


def test_codebook_argmax_points_at_on_grid_path():
    h = assemble_channel([Path.from_loss(80.0, 15.0, -10.0)], GEOM)
    codebook = build_codebook(GEOM, resolution=5.0)
    best = int(np.argmax(beam_snr_db(h, codebook.beams, BUDGET)))
    np.testing.assert_allclose(codebook.directions[best], [15.0, -10.0])


def test_rate_examples():
    assert rate(0.0) == pytest.approx(1.0, abs=1e-12)
    assert rate(10.0 * math.log10(3.0)) == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(rate(np.array([NO_SIGNAL_SNR_DB, 0.0])), [0.0, 1.0])


def test_paths_frame_labels_each_path():
    df = paths_frame([Path.from_loss(80.0, 1.0, 2.0), Path(0.5j, 3.0, 4.0)], slot=1, bs=2)
    assert list(df["path"]) == [0, 1]
    assert (df["slot"] == 1).all() and (df["bs"] == 2).all()
    assert df.loc[0, "gain_db"] == pytest.approx(-80.0, abs=1e-12)
    assert df.loc[1, "phase_rad"] == pytest.approx(math.pi / 2, abs=1e-12)
