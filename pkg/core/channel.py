"""
Sparse multipath channel, planar-array steering vectors and link SNR.

Channel convention: the channel of a BS is stored as the row vector
h = sum_l g_l a(phi_l, theta_l)^H (entries conj(a) scaled by the path gain),
so the received amplitude for beam f is the plain product h.f and the
SNR is p |h.f|^2 / sigma^2.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import ConfigError, DeepOutageError

logger = logging.getLogger(__name__)

# Stand-in for -inf dB (zero received power); rate() maps it to 0.
NO_SIGNAL_SNR_DB = -1000.0

# |h.f| below this fraction of ||h||.||f|| counts as no projection at all.
_ZERO_PROJECTION = 1e-12


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 8
    cols: int = 8
    spacing: float = 0.5  # wavelengths

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"Array needs at least one row and column, got {self.rows}x{self.cols}")
        if self.spacing <= 0:
            raise ConfigError("Element spacing must be positive.")

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 10.0
    noise_density_dbm_hz: float = -174.0
    bandwidth_hz: float = 100e6

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ConfigError("Bandwidth must be positive.")

    @property
    def noise_power_dbm(self) -> float:
        return self.noise_density_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)


@dataclass(frozen=True)
class Path:
    gain: complex
    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        if not abs(self.gain) > 0:
            raise ConfigError("Path gain magnitude must be positive.")

    @classmethod
    def from_loss(cls, loss_db: float, azimuth_deg: float, elevation_deg: float) -> "Path":
        return cls(gain=complex(10.0 ** (-loss_db / 20.0)), azimuth_deg=azimuth_deg, elevation_deg=elevation_deg)


# ----------------------------
# Steering vectors
# ----------------------------
def steering_matrix(azimuth_deg, elevation_deg, geom: ArrayGeometry) -> np.ndarray:
    """
    Array responses for K directions, shape (K, rows*cols).

    Element (m, n) has phase 2*pi*d*(m sin(theta) + n cos(theta) sin(phi));
    elements are flattened row-major (m over rows, n over columns).
    """
    az = np.radians(np.atleast_1d(np.asarray(azimuth_deg, dtype=float)))
    el = np.radians(np.atleast_1d(np.asarray(elevation_deg, dtype=float)))
    m = np.arange(geom.rows, dtype=float)
    n = np.arange(geom.cols, dtype=float)
    phase = (
        m[None, :, None] * np.sin(el)[:, None, None]
        + n[None, None, :] * (np.cos(el) * np.sin(az))[:, None, None]
    )
    return np.exp(2j * math.pi * geom.spacing * phase).reshape(len(az), geom.size)


def array_response(azimuth_deg: float, elevation_deg: float, geom: ArrayGeometry) -> np.ndarray:
    return steering_matrix(azimuth_deg, elevation_deg, geom)[0]


def beam_matrix(directions, geom: ArrayGeometry) -> np.ndarray:
    """Unit-norm beams a(phi, theta)/sqrt(N) for an array of (phi, theta) rows."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    return steering_matrix(directions[:, 0], directions[:, 1], geom) / math.sqrt(geom.size)


def beam_vector(azimuth_deg: float, elevation_deg: float, geom: ArrayGeometry) -> np.ndarray:
    return beam_matrix([[azimuth_deg, elevation_deg]], geom)[0]


# ----------------------------
# Channel assembly
# ----------------------------
def assemble_channel(paths: Sequence[Path], geom: ArrayGeometry,
                     fading_rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Sum the steered paths into one channel vector.

    When `fading_rng` is given every path gain is rotated by a fresh uniform
    phase (one realization of the fading); magnitudes stay geometric.

    Raises:
        DeepOutageError: no paths at all.
    """
    if len(paths) == 0:
        raise DeepOutageError("No propagation path between BS and UE.")

    gains = np.array([p.gain for p in paths], dtype=complex)
    if fading_rng is not None:
        gains = gains * np.exp(1j * fading_rng.uniform(0.0, 2.0 * math.pi, size=len(paths)))
    a = steering_matrix([p.azimuth_deg for p in paths], [p.elevation_deg for p in paths], geom)
    return gains @ np.conj(a)


def beam_snr_db(h: np.ndarray, beams: np.ndarray, budget: LinkBudget) -> np.ndarray:
    """SNR in dB of channel `h` under each row of `beams`."""
    beams = np.atleast_2d(beams)
    amplitude = beams @ h
    power = np.abs(amplitude) ** 2
    floor = (_ZERO_PROJECTION ** 2) * np.vdot(h, h).real * np.sum(np.abs(beams) ** 2, axis=1)
    out = np.full(len(beams), NO_SIGNAL_SNR_DB)
    ok = power > floor
    out[ok] = budget.tx_power_dbm + 10.0 * np.log10(power[ok]) - budget.noise_power_dbm
    return out


def snr(h: np.ndarray, f: np.ndarray, budget: LinkBudget) -> float:
    """
    Link SNR (dB) for channel h and beamformer f.

    Returns NO_SIGNAL_SNR_DB when the beam has no projection on the channel.
    """
    norm = np.linalg.norm(f)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"Beam vector must have unit norm, got {norm:.12f}")
    return float(beam_snr_db(h, f[None, :], budget)[0])


def rate(snr_db):
    """Spectral efficiency log2(1 + SNR) in bit/s/Hz; zero for the no-signal sentinel."""
    x = np.asarray(snr_db, dtype=float)
    r = np.where(x <= NO_SIGNAL_SNR_DB, 0.0, np.log2(1.0 + np.power(10.0, x / 10.0)))
    return float(r) if r.ndim == 0 else r


# ----------------------------
# Debug export
# ----------------------------
def paths_frame(paths: Sequence[Path], **labels) -> pd.DataFrame:
    """Per-path gains and angles as rows, tagged with `labels` (slot, bs, ...)."""
    rows = []
    for i, p in enumerate(paths):
        rows.append({
            **labels,
            "path": i,
            "gain_db": 20.0 * math.log10(abs(p.gain)),
            "phase_rad": float(np.angle(p.gain)),
            "azimuth_deg": p.azimuth_deg,
            "elevation_deg": p.elevation_deg,
        })
    return pd.DataFrame(rows)
