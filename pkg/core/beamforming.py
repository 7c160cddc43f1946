"""
Codebook beam training and neighbourhood beam tracking at the BS.

Measurement oracles are callables mapping an (K, 2) array of (azimuth,
elevation) directions in degrees to K SNR values in dB. Within one slot the
channel does not change, so an oracle is a pure function of the directions.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from core.channel import ArrayGeometry, beam_matrix
from core.errors import ConfigError

logger = logging.getLogger(__name__)

Meter = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Codebook:
    directions: np.ndarray  # (K, 2) azimuth, elevation in degrees
    beams: np.ndarray       # (K, N) unit-norm beamformers
    resolution: Tuple[float, float]

    def __len__(self):
        return len(self.directions)


@dataclass(frozen=True)
class NeighborhoodSpec:
    max_dev_azimuth: float = 10.0
    max_dev_elevation: float = 10.0
    step_azimuth: float = 5.0
    step_elevation: float = 5.0

    def __post_init__(self):
        if self.max_dev_azimuth < 0 or self.max_dev_elevation < 0:
            raise ConfigError("Neighbourhood deviations must be non-negative.")
        if self.step_azimuth <= 0 or self.step_elevation <= 0:
            raise ConfigError("Neighbourhood resolutions must be positive.")


@dataclass(frozen=True)
class TrainingResult:
    direction: Tuple[float, float]
    snr_db: float
    index: int
    tau_b: float


@dataclass(frozen=True)
class TrackingResult:
    direction: Tuple[float, float]
    snr_db: float
    cnt: int
    tau_b: float
    met_threshold: bool


# ----------------------------
# Codebook
# ----------------------------
def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        raise ConfigError(f"Angle range [{lo}, {hi}] is empty")
    if step <= 0:
        raise ConfigError(f"Codebook resolution must be positive, got {step}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count, dtype=float)


def build_codebook(geom: ArrayGeometry, azimuth_range=(-60.0, 60.0), elevation_range=(-20.0, 20.0),
                   resolution=5.0) -> Codebook:
    """
    Steering-vector codebook on a regular angle grid.

    `resolution` is one step for both axes or an (azimuth, elevation) pair.
    Beams are enumerated row-major: azimuth outer, elevation inner. A step
    wider than its range leaves a single grid point at the lower bound.
    """
    step_az, step_el = (resolution, resolution) if np.isscalar(resolution) else tuple(resolution)
    az = _grid(*azimuth_range, step_az)
    el = _grid(*elevation_range, step_el)
    directions = np.array([(a, e) for a in az for e in el], dtype=float)
    return Codebook(directions=directions, beams=beam_matrix(directions, geom),
                    resolution=(float(step_az), float(step_el)))


def initial_beam_training(measure: Meter, codebook: Codebook, slot_duration: float,
                          training_fraction: float = 1.0 / 3.0) -> TrainingResult:
    """
    Exhaustive sweep over the codebook.

    Returns the best beam (lowest codebook index on ties) and the fixed
    handover training time training_fraction * slot_duration.
    """
    if len(codebook) == 0:
        raise ConfigError("Cannot train on an empty codebook.")
    snrs = np.asarray(measure(codebook.directions), dtype=float)
    best = int(np.argmax(snrs))
    return TrainingResult(
        direction=(float(codebook.directions[best, 0]), float(codebook.directions[best, 1])),
        snr_db=float(snrs[best]),
        index=best,
        tau_b=training_fraction * slot_duration,
    )


# ----------------------------
# Neighbourhood tracking
# ----------------------------
def neighborhood(spec: NeighborhoodSpec) -> np.ndarray:
    """Offset set N = N_phi x N_theta as an (|N|, 2) array, azimuth outer."""
    i_max = int(math.floor(spec.max_dev_azimuth / spec.step_azimuth + 1e-9))
    j_max = int(math.floor(spec.max_dev_elevation / spec.step_elevation + 1e-9))
    n_az = spec.step_azimuth * np.arange(-i_max, i_max + 1, dtype=float)
    n_el = spec.step_elevation * np.arange(-j_max, j_max + 1, dtype=float)
    return np.array([(a, e) for a in n_az for e in n_el], dtype=float)


def sorted_neighborhood(main, spec: NeighborhoodSpec) -> np.ndarray:
    """
    Directions main + N ordered by distance from `main`.

    Distance is Euclidean in degrees; ties go to smaller azimuth, then smaller
    elevation. The first row is `main` itself.
    """
    main = np.asarray(main, dtype=float)
    if not np.all(np.isfinite(main)):
        raise ValueError(f"Main direction must be finite, got {main}")
    offsets = neighborhood(spec)
    dist = np.hypot(offsets[:, 0], offsets[:, 1])
    order = np.lexsort((offsets[:, 1], offsets[:, 0], dist))
    return main[None, :] + offsets[order]


def track_beam(measure: Meter, sorted_dirs: np.ndarray, snr_threshold_db: float, beta: float) -> TrackingResult:
    """
    Measure directions in order until one reaches the SNR threshold.

    If none does, every direction has been measured and the best one is
    returned with met_threshold=False. tau_b = beta * cnt in both cases.
    """
    sorted_dirs = np.atleast_2d(np.asarray(sorted_dirs, dtype=float))
    if len(sorted_dirs) == 0:
        raise ValueError("Tracking needs at least one direction.")
    if beta <= 0:
        raise ValueError(f"Beam test duration must be positive, got {beta}")

    snrs = np.asarray(measure(sorted_dirs), dtype=float)
    qualifying = np.nonzero(snrs >= snr_threshold_db)[0]
    if len(qualifying):
        pick, cnt, met = int(qualifying[0]), int(qualifying[0]) + 1, True
    else:
        pick, cnt, met = int(np.argmax(snrs)), len(sorted_dirs), False

    return TrackingResult(
        direction=(float(sorted_dirs[pick, 0]), float(sorted_dirs[pick, 1])),
        snr_db=float(snrs[pick]),
        cnt=cnt,
        tau_b=beta * cnt,
        met_threshold=met,
    )
