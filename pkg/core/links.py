"""
Radio state behind the env: what a BS measures for a beam at a slot.

GeometricLinkModel traces the building-only part of every (slot, BS) link once
per scenario. Each `realize(seed)` then draws street obstacles and fading
phases, applies obstacle losses to all links in one batched pass, assembles
the channels and precomputes the SNR of every codebook beam.

ScriptedLinkModel replaces all of that with a fixed SNR table and a linear
beam pattern, which makes small deterministic MDPs easy to write down.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from core.beamforming import Codebook, build_codebook, initial_beam_training
from core.channel import ArrayGeometry, LinkBudget, Path, assemble_channel, beam_matrix, beam_snr_db, paths_frame
from core.env import Env, EnvConfig
from core.errors import DeepOutageError
from core.scenario import Scenario
from core.scene import ObstacleSet, link_candidates, sample_obstacles, trace_links
from core.seeding import stream

logger = logging.getLogger(__name__)


# ----------------------------
# Geometric links
# ----------------------------
@dataclass
class LinkRealization:
    positions: np.ndarray       # (M, 2)
    channels: np.ndarray        # (M, B, N) complex
    codebook: Codebook
    codebook_snr: np.ndarray    # (M, B, K) dB
    geom: ArrayGeometry
    budget: LinkBudget
    obstacles: ObstacleSet
    paths: List[list]           # traced paths per link, slot-major
    seed: Optional[int] = None

    def train(self, slot: int, bs: int):
        """Exhaustive codebook sweep with `bs` at `slot`; returns (direction, snr_db)."""
        snrs = self.codebook_snr[slot, bs - 1]
        result = initial_beam_training(lambda _: snrs, self.codebook, slot_duration=1.0)
        return result.direction, result.snr_db

    def measure(self, slot: int, bs: int, directions) -> np.ndarray:
        return beam_snr_db(self.channels[slot, bs - 1], beam_matrix(directions, self.geom), self.budget)


class GeometricLinkModel:
    """Ray-traced links of one scenario, re-realized per channel seed."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.n_bs = scenario.n_bs
        self.slots = scenario.slots
        cb = scenario.codebook
        self.codebook = build_codebook(scenario.array, cb.azimuth_range, cb.elevation_range, cb.resolution)
        self.positions = scenario.trajectory.as_array()

        ue_z = scenario.scene.propagation.ue_height
        self.candidates = [
            link_candidates(scenario.scene, bs, (x, y, ue_z))
            for x, y in self.positions
            for bs in scenario.base_stations
        ]
        logger.debug(
            "Traced %d static links (%d candidate paths)",
            len(self.candidates), sum(len(c) for c in self.candidates),
        )

    def realize(self, seed: int) -> LinkRealization:
        sc = self.scenario
        obstacles = sample_obstacles(
            sc.scene, sc.obstacle_density, stream(seed, "obstacles"), sc.obstacles, seed=seed,
        )
        traced = trace_links(sc.scene, obstacles, self.candidates)
        fading = stream(seed, "fading")

        n = sc.array.size
        channels = np.zeros((self.slots, self.n_bs, n), dtype=complex)
        codebook_snr = np.empty((self.slots, self.n_bs, len(self.codebook)))
        outages = 0
        for k, paths in enumerate(traced):
            slot, b = divmod(k, self.n_bs)
            try:
                h = assemble_channel(
                    [Path.from_loss(p.loss_db, p.azimuth_deg, p.elevation_deg) for p in paths],
                    sc.array,
                    fading,
                )
            except DeepOutageError:
                outages += 1
                h = np.zeros(n, dtype=complex)
            channels[slot, b] = h
            codebook_snr[slot, b] = beam_snr_db(h, self.codebook.beams, sc.env.budget)
        if outages:
            logger.debug("Realization %s: %d links without any path", seed, outages)

        return LinkRealization(
            positions=self.positions,
            channels=channels,
            codebook=self.codebook,
            codebook_snr=codebook_snr,
            geom=sc.array,
            budget=sc.env.budget,
            obstacles=obstacles,
            paths=traced,
            seed=seed,
        )


def channel_dump(realization: LinkRealization) -> pd.DataFrame:
    """Per-path gains and departure angles of every link, for debugging."""
    n_bs = realization.channels.shape[1]
    frames = []
    for k, paths in enumerate(realization.paths):
        slot, b = divmod(k, n_bs)
        frame = paths_frame(
            [Path.from_loss(p.loss_db, p.azimuth_deg, p.elevation_deg) for p in paths],
            slot=slot + 1,
            bs=b + 1,
        )
        if len(frame):
            frame["kind"] = [p.kind for p in paths]
        frames.append(frame)
    frames = [f for f in frames if len(f)]
    if not frames:
        return pd.DataFrame(columns=["slot", "bs", "path", "gain_db", "phase_rad", "azimuth_deg", "elevation_deg", "kind"])
    return pd.concat(frames, ignore_index=True)


# ----------------------------
# Scripted links
# ----------------------------
class ScriptedLinkModel:
    """
    Deterministic links from a table.

    SNR of beam direction d at (slot, bs) = peak[slot, bs] - slope * |d - opt|,
    with |.| the Euclidean angle distance in degrees. Training always finds the
    optimal direction. Every realization is the same.
    """

    def __init__(self, peak_snr_db, optimal_dirs=None, slope_db_per_deg: float = 1.0, positions=None):
        self.peak = np.asarray(peak_snr_db, dtype=float)
        if self.peak.ndim != 2:
            raise ValueError("peak_snr_db must be an (M, B) table")
        self.slots, self.n_bs = self.peak.shape
        if optimal_dirs is None:
            optimal_dirs = np.zeros((self.slots, self.n_bs, 2))
        self.optimal = np.broadcast_to(np.asarray(optimal_dirs, dtype=float), (self.slots, self.n_bs, 2))
        self.slope = float(slope_db_per_deg)
        if positions is None:
            positions = np.column_stack([np.arange(self.slots, dtype=float), np.zeros(self.slots)])
        self.positions = np.asarray(positions, dtype=float)

    def realize(self, seed: int) -> "ScriptedLinkModel":
        return self

    def train(self, slot: int, bs: int):
        d = self.optimal[slot, bs - 1]
        return (float(d[0]), float(d[1])), float(self.peak[slot, bs - 1])

    def measure(self, slot: int, bs: int, directions) -> np.ndarray:
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        off = np.hypot(*(directions - self.optimal[slot, bs - 1][None, :]).T)
        return self.peak[slot, bs - 1] - self.slope * off


def make_env(scenario: Scenario, links=None) -> Env:
    """Env over a scenario's geometric links (or any other link model)."""
    return Env(links if links is not None else GeometricLinkModel(scenario), scenario.env)


def scripted_env(peak_snr_db, config: EnvConfig = None, **kwargs) -> Env:
    return Env(ScriptedLinkModel(peak_snr_db, **kwargs), config or EnvConfig())
