"""
Comparison policies.

Multi-connectivity keeps a backup link to the nearest other BS and switches to
it (paying full beam training) whenever the serving SNR drops below the
threshold. Learned handover reuses the deep Q-learning machinery with
handover-only actions and a rate reward, so it never sees the training
overhead it causes.
"""
import logging
from dataclasses import replace
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from core.agent import TrainConfig, train
from core.env import Env, State, run_episode
from core.errors import ConfigError

logger = logging.getLogger(__name__)


class MultiConnectivityPolicy:
    """
    Hand over to the backup BS whenever the serving link misses the threshold.

    The backup is the BS nearest (2-D) to the UE's position in the previous
    slot, excluding the serving one. Above the threshold it returns 0, which
    the env ignores, so this policy never tracks.
    """

    def __init__(self, env: Env, bs_positions: Optional[Sequence] = None):
        if bs_positions is None:
            bs_positions = [b.position[:2] for b in env.links.scenario.base_stations]
        self.bs_xy = np.asarray(bs_positions, dtype=float)[:, :2]
        if len(self.bs_xy) < 2:
            raise ConfigError("Multi-connectivity needs at least two BSs.")
        if len(self.bs_xy) != env.n_bs:
            raise ConfigError(f"Got {len(self.bs_xy)} BS positions for {env.n_bs} BSs")
        self.env = env

    def backup(self, state: State) -> int:
        ue = np.asarray(self.env.position(max(state.location - 1, 1)))
        dist = np.hypot(*(self.bs_xy - ue[None, :]).T)
        dist[state.serving_bs - 1] = np.inf
        return int(np.argmin(dist)) + 1

    def __call__(self, state: State) -> int:
        if state.snr_db >= self.env.config.snr_threshold_db:
            return 0
        return self.backup(state)


def baseline_multiconnectivity(env: Env, seed: int, bs_positions: Optional[Sequence] = None) -> pd.DataFrame:
    return run_episode(env, MultiConnectivityPolicy(env, bs_positions), seed)


def baseline_learned_handover(env_factory: Callable[[], Env], config: TrainConfig):
    """Deep Q-learning restricted to actions 1..|B|, rewarded by the raw rate."""
    env = env_factory()
    actions = tuple(range(1, env.n_bs + 1))
    if config.reward != "rate":
        logger.debug("Learned-handover baseline trains on rate rewards; overriding reward='%s'", config.reward)
    policy, curve = train(lambda: env, replace(config, reward="rate"), actions=actions)
    return policy, curve
