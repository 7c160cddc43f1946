"""
Joint handover / beam-tracking MDP over one UE trajectory.

Each slot the env compares the stale-beam SNR at slot entry with the SNR
threshold. Above it nothing is trained and the action is ignored. Below it the
action decides: 0 tracks the current beam in its spatial neighbourhood, j >= 1
runs full beam training with BS j. A tracked slot that still misses both the
SNR and the throughput threshold falls back to an exhaustive search over all
BSs. The slot's throughput discounts the rate by the training share of the slot.

The env holds its own state; `step(action)` acts on it. Radio access goes
through a link realization (see core.links) with `train(slot, bs)` and
`measure(slot, bs, directions)`.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd

from core.beamforming import NeighborhoodSpec, sorted_neighborhood, track_beam
from core.channel import LinkBudget, rate
from core.errors import ConfigError, EpisodeFinishedError, SlotBudgetError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "slot", "x", "y", "serving_bs", "action", "decision", "entry_snr_db", "snr_db",
    "tracking", "cnt", "tau_b_us", "rate", "throughput", "reward", "handover", "fallback",
]


@dataclass(frozen=True)
class EnvConfig:
    slot_duration: float = 10e-3        # tau_c, s
    beam_test_duration: float = 10e-6   # beta, s
    snr_threshold_db: float = 2.0
    throughput_threshold: float = 1.0   # bit/Hz
    penalty: float = 100.0              # lambda
    association_interval: float = 1.0   # T_A, s
    training_fraction: float = 1.0 / 3.0
    neighborhood: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    budget: LinkBudget = field(default_factory=LinkBudget)

    def __post_init__(self):
        if self.slot_duration <= 0 or self.beam_test_duration <= 0 or self.association_interval <= 0:
            raise ConfigError("Slot, beam test and association durations must be positive.")
        if not 0.0 < self.training_fraction < 1.0:
            raise ConfigError(f"Handover training must take part of the slot, got fraction {self.training_fraction}")
        if self.penalty <= 0:
            raise ConfigError(f"Penalty must be positive, got {self.penalty}")

    @property
    def handover_training_time(self) -> float:
        return self.training_fraction * self.slot_duration


@dataclass(frozen=True)
class State:
    location: int     # 1..M
    serving_bs: int   # 1..|B|
    snr_db: float
    tracking: int     # 0 or 1

    def __post_init__(self):
        if self.location < 1 or self.serving_bs < 1 or self.tracking not in (0, 1):
            raise ValueError(f"Invalid state {self}")


@dataclass(frozen=True)
class StepOutcome:
    next_state: Optional[State]
    serving_bs: int
    tracking: int
    reward: float
    throughput: float
    rate: float
    tau_b: float
    snr_db: float
    cnt: int
    handover_executed: bool
    reactive_fallback: bool
    decision: bool
    done: bool


# ----------------------------
# Slot accounting
# ----------------------------
def throughput(rate_bps_hz: float, tau_b: float, tau_c: float) -> float:
    """Rate discounted by the training share of the slot."""
    if tau_c <= 0:
        raise ValueError(f"Slot duration must be positive, got {tau_c}")
    if tau_b < 0 or tau_b > tau_c:
        raise SlotBudgetError(f"Beam training time {tau_b} s does not fit a {tau_c} s slot")
    return (1.0 - tau_b / tau_c) * rate_bps_hz


def slot_reward(gamma: float, threshold: float, penalty: float) -> float:
    return gamma - penalty * (1.0 if gamma <= threshold else 0.0)


# ----------------------------
# Environment
# ----------------------------
class Env:
    """
    Episode driver for one link model.

    Args:
        links: object with `realize(seed)` returning a realization that offers
            `positions`, `train(slot, bs)` and `measure(slot, bs, directions)`.
        config: slot timing, thresholds and penalty.
    """

    def __init__(self, links, config: EnvConfig):
        self.links = links
        self.config = config
        self.n_bs = int(links.n_bs)
        self.slots = int(links.slots)
        self.radio = None
        self.state: Optional[State] = None
        self._beam: Optional[Tuple[float, float]] = None
        self._done = True

    @property
    def n_actions(self) -> int:
        return self.n_bs + 1

    @property
    def done(self) -> bool:
        return self._done

    def position(self, location: int) -> Tuple[float, float]:
        x, y = self.radio.positions[location - 1]
        return float(x), float(y)

    def reset(self, seed: int) -> State:
        """New channel realization; UE at the first waypoint served by BS 1 after full training."""
        self.radio = self.links.realize(seed)
        direction, snr_db = self.radio.train(0, 1)
        self._beam = direction
        self._done = False
        self.state = State(location=1, serving_bs=1, snr_db=snr_db, tracking=0)
        return self.state

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise EpisodeFinishedError("Episode is finished; call reset() first.")
        if not 0 <= int(action) <= self.n_bs:
            raise ValueError(f"Action must be in 0..{self.n_bs}, got {action}")
        action = int(action)

        cfg = self.config
        s = self.state
        slot = s.location - 1
        serving, beam, snr_db = s.serving_bs, self._beam, s.snr_db
        tau_b, cnt, tracking = 0.0, 0, 0
        handover = fallback = False
        decision = s.snr_db < cfg.snr_threshold_db

        if decision and action != 0:
            beam, snr_db = self.radio.train(slot, action)
            tau_b = cfg.handover_training_time
            handover = action != serving
            serving = action
        elif decision:
            result = track_beam(
                lambda dirs: self.radio.measure(slot, serving, dirs),
                sorted_neighborhood(beam, cfg.neighborhood),
                cfg.snr_threshold_db,
                cfg.beam_test_duration,
            )
            beam, snr_db, cnt, tau_b, tracking = result.direction, result.snr_db, result.cnt, result.tau_b, 1
            if not result.met_threshold:
                gamma = throughput(rate(snr_db), tau_b, cfg.slot_duration)
                if gamma <= cfg.throughput_threshold:
                    serving, beam, snr_db = self._exhaustive_association(slot)
                    tau_b += cfg.handover_training_time
                    fallback = True
                    logger.debug("Reactive fallback at slot %d to BS %d", s.location, serving)

        r = rate(snr_db)
        gamma = throughput(r, tau_b, cfg.slot_duration)
        reward = slot_reward(gamma, cfg.throughput_threshold, cfg.penalty)

        self._beam = beam
        if s.location == self.slots:
            self._done = True
            next_state = None
        else:
            stale = float(self.radio.measure(slot + 1, serving, np.asarray([beam]))[0])
            next_state = State(location=s.location + 1, serving_bs=serving, snr_db=stale, tracking=tracking)
        self.state = next_state

        return StepOutcome(
            next_state=next_state,
            serving_bs=serving,
            tracking=tracking,
            reward=reward,
            throughput=gamma,
            rate=r,
            tau_b=tau_b,
            snr_db=snr_db,
            cnt=cnt,
            handover_executed=handover,
            reactive_fallback=fallback,
            decision=decision,
            done=self._done,
        )

    def _exhaustive_association(self, slot: int):
        best = None
        for bs in range(1, self.n_bs + 1):
            direction, snr_db = self.radio.train(slot, bs)
            if best is None or snr_db > best[2]:
                best = (bs, direction, snr_db)
        return best

    def snapshot(self):
        return (self.state, self._beam, self._done)

    def restore(self, snap) -> None:
        self.state, self._beam, self._done = snap


def run_episode(env: Env, policy: Callable[[State], int], seed: int) -> pd.DataFrame:
    """
    Roll `policy` over one realization and return the per-slot trace.

    The policy is queried every slot; `decision` marks the slots where its
    action was applied.
    """
    state = env.reset(seed)
    rows = []
    while not env.done:
        action = int(policy(state))
        x, y = env.position(state.location)
        out = env.step(action)
        rows.append({
            "slot": state.location,
            "x": x,
            "y": y,
            "serving_bs": out.serving_bs,
            "action": action,
            "decision": out.decision,
            "entry_snr_db": state.snr_db,
            "snr_db": out.snr_db,
            "tracking": out.tracking,
            "cnt": out.cnt,
            "tau_b_us": out.tau_b * 1e6,
            "rate": out.rate,
            "throughput": out.throughput,
            "reward": out.reward,
            "handover": out.handover_executed,
            "fallback": out.reactive_fallback,
        })
        state = out.next_state
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)
