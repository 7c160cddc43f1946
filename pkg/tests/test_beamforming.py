import numpy as np
import pytest

from core.beamforming import (
    NeighborhoodSpec,
    build_codebook,
    initial_beam_training,
    neighborhood,
    sorted_neighborhood,
    track_beam,
)
from core.channel import ArrayGeometry
from core.errors import ConfigError

GEOM = ArrayGeometry()
BETA = 10e-6
TAU_C = 10e-3


def fixed(values):
    """Meter that returns `values` in measurement order."""
    values = np.asarray(values, dtype=float)
    return lambda dirs: values[: len(dirs)]


# ----------------------------
# Codebook and training
# ----------------------------
def test_default_codebook_size_and_norms():
    codebook = build_codebook(GEOM)
    assert len(codebook) == 25 * 9
    np.testing.assert_allclose(np.linalg.norm(codebook.beams, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(codebook.directions[0], [-60.0, -20.0])
    np.testing.assert_allclose(codebook.directions[1], [-60.0, -15.0])


def test_coarse_resolution_leaves_single_beam():
    codebook = build_codebook(GEOM, resolution=500.0)
    assert len(codebook) == 1
    result = initial_beam_training(lambda d: np.array([3.0]), codebook, TAU_C)
    assert result.index == 0
    assert result.snr_db == 3.0


def test_invalid_codebook_ranges():
    with pytest.raises(ConfigError):
        build_codebook(GEOM, azimuth_range=(10.0, -10.0))
    with pytest.raises(ConfigError):
        build_codebook(GEOM, resolution=0.0)


def test_training_ties_pick_lowest_index():
    codebook = build_codebook(GEOM, resolution=10.0)
    result = initial_beam_training(lambda d: np.zeros(len(d)), codebook, TAU_C)
    assert result.index == 0
    assert result.tau_b == pytest.approx(TAU_C / 3.0, abs=1e-15)


def test_training_returns_argmax_direction():
    codebook = build_codebook(GEOM, resolution=5.0)
    target = np.array([25.0, -5.0])
    result = initial_beam_training(lambda d: -np.linalg.norm(d - target, axis=1), codebook, TAU_C)
    assert result.direction == (25.0, -5.0)


# ----------------------------
# Neighbourhood
# ----------------------------
def test_neighborhood_grid():
    offsets = neighborhood(NeighborhoodSpec())
    assert len(offsets) == 25
    np.testing.assert_allclose(np.unique(offsets[:, 0]), [-10.0, -5.0, 0.0, 5.0, 10.0])
    # Symmetric under negation.
    assert {tuple(o) for o in offsets} == {tuple(-o + 0.0) for o in offsets}


def test_zero_deviation_is_main_only():
    offsets = neighborhood(NeighborhoodSpec(max_dev_azimuth=0.0, max_dev_elevation=0.0))
    np.testing.assert_array_equal(offsets, [[0.0, 0.0]])


def test_sorted_neighborhood_order():
    dirs = sorted_neighborhood((30.0, 0.0), NeighborhoodSpec())
    assert len(dirs) == 25
    np.testing.assert_array_equal(dirs[0], [30.0, 0.0])
    np.testing.assert_array_equal(dirs[1:5], [[25.0, 0.0], [30.0, -5.0], [30.0, 5.0], [35.0, 0.0]])
    dist = np.hypot(dirs[:, 0] - 30.0, dirs[:, 1])
    assert np.all(np.diff(dist) >= 0)


def test_sorted_neighborhood_rejects_nan():
    with pytest.raises(ValueError):
        sorted_neighborhood((np.nan, 0.0), NeighborhoodSpec())


def test_invalid_neighborhood_spec():
    with pytest.raises(ConfigError):
        NeighborhoodSpec(step_azimuth=0.0)
    with pytest.raises(ConfigError):
        NeighborhoodSpec(max_dev_elevation=-1.0)


# ----------------------------
# Tracking
# ----------------------------
def test_first_direction_meets_threshold():
    dirs = sorted_neighborhood((0.0, 0.0), NeighborhoodSpec())
    result = track_beam(fixed([5.0] + [0.0] * 24), dirs, 2.0, BETA)
    assert result.cnt == 1
    assert result.tau_b == BETA * 1
    assert result.met_threshold


def test_seventh_direction_meets_threshold():
    dirs = sorted_neighborhood((0.0, 0.0), NeighborhoodSpec())
    values = [0.0] * 25
    values[6] = 3.0
    result = track_beam(fixed(values), dirs, 2.0, BETA)
    assert result.cnt == 7
    assert result.tau_b == BETA * 7
    assert result.direction == tuple(dirs[6])


def test_no_direction_meets_threshold_returns_best():
    dirs = sorted_neighborhood((0.0, 0.0), NeighborhoodSpec())
    values = np.linspace(-10.0, 1.0, 25)[::-1].copy()
    values[12] = 1.5
    result = track_beam(fixed(values), dirs, 2.0, BETA)
    assert result.cnt == 25
    assert not result.met_threshold
    assert result.snr_db == 1.5
    assert result.tau_b == pytest.approx(250e-6, rel=1e-12)
    assert result.tau_b / TAU_C == pytest.approx(0.025, rel=1e-12)


def test_tracking_matches_oracle_on_random_maps():
    rng = np.random.default_rng(123)
    dirs = sorted_neighborhood((10.0, -5.0), NeighborhoodSpec())
    for _ in range(1000):
        values = rng.uniform(-10.0, 10.0, size=25)
        threshold = rng.uniform(-5.0, 12.0)
        result = track_beam(fixed(values), dirs, threshold, BETA)
        above = [i for i, v in enumerate(values) if v >= threshold]
        if above:
            assert result.cnt == above[0] + 1
            assert result.snr_db == values[above[0]]
            assert result.direction == tuple(dirs[above[0]])
        else:
            assert result.cnt == 25
            assert result.snr_db == values.max()
            assert result.direction == tuple(dirs[int(np.argmax(values))])
        assert result.tau_b == BETA * result.cnt


def test_lower_threshold_never_needs_more_measurements():
    rng = np.random.default_rng(4)
    dirs = sorted_neighborhood((0.0, 0.0), NeighborhoodSpec())
    for _ in range(200):
        values = rng.uniform(-10.0, 10.0, size=25)
        hi, lo = sorted(rng.uniform(-10.0, 10.0, size=2))[::-1]
        assert track_beam(fixed(values), dirs, lo, BETA).cnt <= track_beam(fixed(values), dirs, hi, BETA).cnt


def test_tracking_argument_validation():
    with pytest.raises(ValueError):
        track_beam(fixed([]), np.empty((0, 2)), 2.0, BETA)
    with pytest.raises(ValueError):
        track_beam(fixed([1.0]), [[0.0, 0.0]], 2.0, 0.0)
