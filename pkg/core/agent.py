"""
Learning the track-vs-handover policy.

Deep Q-learning with experience replay and a periodically synced target
network (torch, float64, CPU), a tabular Q-learning mode for small
discretised problems, and exhaustive value iteration over the reachable
states of a deterministic env. All three return a QPolicy whose greedy
action is the lowest-index argmax of its action values.
"""
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Dict, Hashable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import yaml
from tqdm import tqdm

from core import settings
from core.env import State
from core.errors import ArtifactMismatchError, ConfigError, TrainingDivergedError
from core.seeding import derive_seed, stream

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
REWARD_MODES = ("throughput", "rate")


# ----------------------------
# Configuration
# ----------------------------
@dataclass(frozen=True)
class TrainConfig:
    discount: float = 0.99
    episodes: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 50_000
    target_sync: int = 500
    hidden_sizes: Tuple[int, ...] = (64, 64)
    snr_min_db: float = -20.0
    snr_max_db: float = 60.0
    reward: str = "throughput"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError(f"discount must be in [0, 1], got {self.discount}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if not 0.0 < self.epsilon_decay_fraction <= 1.0:
            raise ConfigError("epsilon_decay_fraction must be in (0, 1]")
        if self.episodes < 0:
            raise ConfigError(f"episodes must be non-negative, got {self.episodes}")
        if self.batch_size < 1 or self.buffer_size < self.batch_size or self.target_sync < 1:
            raise ConfigError("Need batch_size >= 1, buffer_size >= batch_size and target_sync >= 1")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.snr_max_db <= self.snr_min_db:
            raise ConfigError("snr_max_db must exceed snr_min_db")
        if self.reward not in REWARD_MODES:
            raise ConfigError(f"reward must be one of {REWARD_MODES}, got '{self.reward}'")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden_sizes must be positive, got {self.hidden_sizes}")


def load_train_config(path=None, **overrides) -> TrainConfig:
    """
    Read TrainConfig from YAML. A missing file falls back to the defaults.
    Keyword overrides that are not None win over the file.
    """
    data = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            logger.warning("Training config %s not found; using defaults.", path)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: training config must be a mapping")

    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown training config keys: {', '.join(unknown)}")
    if "hidden_sizes" in data:
        data["hidden_sizes"] = tuple(int(h) for h in data["hidden_sizes"])
    try:
        return TrainConfig(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid training config: {e}")


def epsilon_at(episode: int, config: TrainConfig) -> float:
    """Exponential decay from start to end over the first decay_fraction of the episodes."""
    horizon = config.epsilon_decay_fraction * config.episodes
    if episode >= horizon or config.epsilon_start == config.epsilon_end:
        return config.epsilon_end
    if config.epsilon_end == 0.0 or config.epsilon_start == 0.0:
        return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * episode / horizon
    return config.epsilon_start * (config.epsilon_end / config.epsilon_start) ** (episode / horizon)


# ----------------------------
# State encoding
# ----------------------------
@dataclass(frozen=True)
class StateEncoder:
    n_bs: int
    slots: int
    snr_min_db: float = -20.0
    snr_max_db: float = 60.0

    @property
    def size(self) -> int:
        return self.n_bs + 3

    def __call__(self, state: State) -> np.ndarray:
        return encode_state(state, self.n_bs, self.slots, self.snr_min_db, self.snr_max_db)


def encode_state(state: State, n_bs: int, slots: int, snr_min_db: float = -20.0,
                 snr_max_db: float = 60.0) -> np.ndarray:
    """[l/M, one-hot serving BS, clamped normalised SNR, tracking flag]."""
    x = np.zeros(n_bs + 3)
    x[0] = state.location / slots
    x[state.serving_bs] = 1.0
    x[n_bs + 1] = min(max((state.snr_db - snr_min_db) / (snr_max_db - snr_min_db), 0.0), 1.0)
    x[n_bs + 2] = float(state.tracking)
    return x


def state_key(state: State, bucket_db: float = 1.0) -> Hashable:
    """Discrete key for tabular learning: SNR bucketed to `bucket_db`."""
    return (state.location, state.serving_bs, int(math.floor(state.snr_db / bucket_db)), state.tracking)


# ----------------------------
# Networks and replay
# ----------------------------
class QNetwork(nn.Module):
    """Fully connected ReLU network from encoded state to one value per action."""

    def __init__(self, input_size: int, output_size: int, hidden_sizes: Sequence[int] = (64, 64)):
        super().__init__()
        sizes = [input_size, *hidden_sizes, output_size]
        layers = []
        for i in range(len(sizes) - 1):
            layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=torch.float64))
            if i < len(sizes) - 2:
                layers.append(nn.ReLU())
        self.net = nn.Sequential(*layers)
        self.sizes = tuple(sizes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def linear_layers(self):
        return [m for m in self.net if isinstance(m, nn.Linear)]


class ReplayBuffer:
    """Fixed-capacity ring buffer of (s, a, r, s', terminal) transitions."""

    def __init__(self, capacity: int, state_size: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_size))
        self.terminal = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, state, action: int, reward: float, next_state, terminal: bool) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return (
            torch.from_numpy(self.states[idx]),
            torch.from_numpy(self.actions[idx]),
            torch.from_numpy(self.rewards[idx]),
            torch.from_numpy(self.next_states[idx]),
            torch.from_numpy(self.terminal[idx]),
        )


def td_targets(rewards: torch.Tensor, next_q: torch.Tensor, terminal: torch.Tensor, discount: float) -> torch.Tensor:
    """y = r + discount * max_a' Q_target(s', a'); y = r at terminal transitions."""
    best = next_q.max(dim=1).values
    return rewards + discount * best * (~terminal).to(rewards.dtype)


def td_update(batch, online: QNetwork, target: QNetwork, optimizer: torch.optim.Optimizer,
              discount: float) -> float:
    """
    One gradient step on the mean squared TD error of `batch`.

    Raises:
        TrainingDivergedError: the loss is not finite.
    """
    states, actions, rewards, next_states, terminal = batch
    with torch.no_grad():
        y = td_targets(rewards, target(next_states), terminal, discount)
    q = online(states).gather(1, actions.unsqueeze(1)).squeeze(1)
    loss = nn.functional.mse_loss(q, y)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"Non-finite TD loss {loss.item()} (reward range {rewards.min().item()}..{rewards.max().item()})"
        )
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.item())


# ----------------------------
# Policies
# ----------------------------
class QPolicy:
    """
    Greedy policy over a Q-network or a Q-table.

    `actions` maps value index k to env action actions[k]; the proposed method
    uses 0..|B|, the learned-handover baseline 1..|B|.
    """

    def __init__(self, actions: Sequence[int], network: Optional[QNetwork] = None,
                 encoder: Optional[StateEncoder] = None, table: Optional[Dict] = None,
                 key_fn: Callable[[State], Hashable] = state_key):
        if (network is None) == (table is None):
            raise ValueError("QPolicy needs exactly one of network or table")
        self.actions = tuple(int(a) for a in actions)
        self.network = network
        self.encoder = encoder
        self.table = table
        self.key_fn = key_fn

    @property
    def n_bs(self) -> Optional[int]:
        return self.encoder.n_bs if self.encoder is not None else None

    def q_values(self, state: State) -> np.ndarray:
        if self.network is not None:
            with torch.no_grad():
                x = torch.from_numpy(self.encoder(state)).unsqueeze(0)
                return self.network(x)[0].numpy().copy()
        return np.asarray(self.table.get(self.key_fn(state), np.zeros(len(self.actions))), dtype=float)

    def greedy_index(self, state: State) -> int:
        # np.argmax returns the first maximum.
        return int(np.argmax(self.q_values(state)))

    def __call__(self, state: State) -> int:
        return self.actions[self.greedy_index(state)]


def select_action(policy: QPolicy, state: State, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy env action. One uniform draw per call, plus one index draw when exploring."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return policy.actions[int(rng.integers(len(policy.actions)))]
    return policy(state)


def _step_reward(outcome, mode: str) -> float:
    return outcome.rate if mode == "rate" else outcome.reward


# ----------------------------
# Deep Q-learning
# ----------------------------
def train(env_factory: Callable, config: TrainConfig, actions: Optional[Sequence[int]] = None):
    """
    Deep Q-learning over fresh channel realizations.

    Episode e runs on realization seed derive_seed(config.seed, "training", e).
    Exploration, replay sampling and weight init draw from their own streams,
    so a fixed seed reproduces the learning curve bit for bit.

    Returns:
        (QPolicy, learning curve DataFrame with episode, return, epsilon, loss)

    Raises:
        TrainingDivergedError: non-finite loss or running-mean return.
    """
    env = env_factory()
    actions = tuple(range(env.n_actions)) if actions is None else tuple(actions)
    if not actions or any(not 0 <= a <= env.n_bs for a in actions):
        raise ConfigError(f"Action set {actions} does not fit |B|={env.n_bs}")

    torch.set_num_threads(settings.torch_threads())
    torch.manual_seed(derive_seed(config.seed, "network"))
    encoder = StateEncoder(env.n_bs, env.slots, config.snr_min_db, config.snr_max_db)
    online = QNetwork(encoder.size, len(actions), config.hidden_sizes)
    target = QNetwork(encoder.size, len(actions), config.hidden_sizes)
    target.load_state_dict(online.state_dict())
    optimizer = torch.optim.Adam(online.parameters(), lr=config.learning_rate)
    policy = QPolicy(actions, network=online, encoder=encoder)

    buffer = ReplayBuffer(config.buffer_size, encoder.size)
    explore_rng = stream(config.seed, "exploration")
    replay_rng = stream(config.seed, "training")
    index_of = {a: k for k, a in enumerate(actions)}
    blank = np.zeros(encoder.size)

    rows = []
    returns = []
    steps = 0
    bar = tqdm(range(config.episodes), desc="train", unit="ep", disable=not settings.progress_enabled())
    for episode in bar:
        epsilon = epsilon_at(episode, config)
        state = env.reset(derive_seed(config.seed, "training", episode))
        total, losses = 0.0, []
        while not env.done:
            action = select_action(policy, state, epsilon, explore_rng)
            out = env.step(action)
            r = _step_reward(out, config.reward)
            buffer.add(
                encoder(state), index_of[action], r,
                encoder(out.next_state) if out.next_state is not None else blank, out.done,
            )
            steps += 1
            if len(buffer) >= config.batch_size:
                losses.append(td_update(buffer.sample(config.batch_size, replay_rng), online, target,
                                        optimizer, config.discount))
            if steps % config.target_sync == 0:
                target.load_state_dict(online.state_dict())
            total += r
            state = out.next_state

        returns.append(total)
        running = float(np.mean(returns[-100:]))
        if not math.isfinite(running):
            raise TrainingDivergedError(f"Running-mean return became {running} at episode {episode}")
        rows.append({
            "episode": episode,
            "return": total,
            "epsilon": epsilon,
            "loss": float(np.mean(losses)) if losses else float("nan"),
        })
        if episode % 100 == 0:
            bar.set_postfix(ret=f"{running:.2f}", eps=f"{epsilon:.3f}")

    logger.info("Trained %d episodes, %d steps", config.episodes, steps)
    curve = pd.DataFrame(rows, columns=["episode", "return", "epsilon", "loss"])
    return policy, curve


# ----------------------------
# Tabular Q-learning
# ----------------------------
def tabular_q_learning(env, config: TrainConfig, key_fn: Callable[[State], Hashable] = state_key,
                       actions: Optional[Sequence[int]] = None, alpha: float = 1.0) -> QPolicy:
    """
    Classic one-step Q-learning on a small env with discretised states.

    `env` needs reset(seed), step(action) returning an outcome with
    next_state/reward/rate/done, and done/n_actions. Exploration follows the
    same epsilon schedule as deep training.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    actions = tuple(range(env.n_actions)) if actions is None else tuple(actions)
    table: Dict[Hashable, np.ndarray] = {}
    policy = QPolicy(actions, table=table, key_fn=key_fn)
    rng = stream(config.seed, "exploration")

    def row(key):
        if key not in table:
            table[key] = np.zeros(len(actions))
        return table[key]

    for episode in range(config.episodes):
        epsilon = epsilon_at(episode, config)
        state = env.reset(derive_seed(config.seed, "training", episode))
        while not env.done:
            action = select_action(policy, state, epsilon, rng)
            out = env.step(action)
            target = _step_reward(out, config.reward)
            if not out.done:
                target += config.discount * float(np.max(row(key_fn(out.next_state))))
            q = row(key_fn(state))
            k = actions.index(action)
            q[k] += alpha * (target - q[k])
            state = out.next_state
    return policy


# ----------------------------
# Value iteration
# ----------------------------
def value_iteration(env, actions: Optional[Sequence[int]] = None, discount: float = 0.99,
                    reward: str = "throughput", seed: int = 0):
    """
    Exact finite-horizon Q-values of every state reachable from reset(seed).

    Only valid for deterministic envs: the search replays each action from a
    snapshot and trusts that the same action gives the same outcome.

    Returns:
        (Q dict keyed by State, greedy QPolicy over that table)
    """
    if reward not in REWARD_MODES:
        raise ConfigError(f"reward must be one of {REWARD_MODES}, got '{reward}'")
    actions = tuple(range(env.n_actions)) if actions is None else tuple(actions)
    env.reset(seed)
    memo: Dict = {}
    q_by_state: Dict[State, np.ndarray] = {}

    def solve(snap) -> float:
        if snap in memo:
            return memo[snap]
        values = np.empty(len(actions))
        for k, a in enumerate(actions):
            env.restore(snap)
            out = env.step(a)
            values[k] = _step_reward(out, reward)
            if not out.done:
                values[k] += discount * solve(env.snapshot())
        env.restore(snap)
        q_by_state.setdefault(snap[0], values)
        memo[snap] = float(values.max())
        return memo[snap]

    solve(env.snapshot())
    return q_by_state, QPolicy(actions, table=q_by_state, key_fn=lambda s: s)


# ----------------------------
# Checkpoints
# ----------------------------
def policy_to_dict(policy: QPolicy, config: Optional[TrainConfig] = None) -> dict:
    if policy.network is None:
        raise ValueError("Only network policies are checkpointed.")
    enc = policy.encoder
    return {
        "version": CHECKPOINT_VERSION,
        "n_bs": enc.n_bs,
        "slots": enc.slots,
        "snr_range_db": [enc.snr_min_db, enc.snr_max_db],
        "actions": list(policy.actions),
        "layer_sizes": list(policy.network.sizes),
        "layers": [
            {
                "weight": layer.weight.detach().numpy().tolist(),
                "bias": layer.bias.detach().numpy().tolist(),
            }
            for layer in policy.network.linear_layers()
        ],
        "train_config": config_to_dict(config) if config is not None else None,
    }


def config_to_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["hidden_sizes"] = list(config.hidden_sizes)
    return d


def save_policy(policy: QPolicy, path, config: Optional[TrainConfig] = None) -> str:
    """Write the JSON checkpoint and return its sha256."""
    text = json.dumps(policy_to_dict(policy, config), sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_policy(path, n_bs: Optional[int] = None, slots: Optional[int] = None) -> QPolicy:
    """
    Rebuild a network policy from a checkpoint.

    Raises:
        ArtifactMismatchError: unknown version, or the checkpoint was trained
            for another BS count than `n_bs` or another walk length than `slots`.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactMismatchError(f"Cannot read policy checkpoint {path}: {e}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ArtifactMismatchError(f"Unsupported checkpoint version {doc.get('version')} in {path}")
    if n_bs is not None and doc["n_bs"] != n_bs:
        raise ArtifactMismatchError(
            f"Checkpoint {path} was trained for {doc['n_bs']} BSs, scenario has {n_bs}"
        )
    if slots is not None and doc["slots"] != slots:
        raise ArtifactMismatchError(
            f"Checkpoint {path} was trained on a {doc['slots']}-slot walk, scenario has {slots}"
        )

    sizes = doc["layer_sizes"]
    network = QNetwork(sizes[0], sizes[-1], sizes[1:-1])
    with torch.no_grad():
        for layer, saved in zip(network.linear_layers(), doc["layers"]):
            layer.weight.copy_(torch.tensor(saved["weight"], dtype=torch.float64))
            layer.bias.copy_(torch.tensor(saved["bias"], dtype=torch.float64))
    lo, hi = doc["snr_range_db"]
    encoder = StateEncoder(doc["n_bs"], doc["slots"], lo, hi)
    return QPolicy(doc["actions"], network=network, encoder=encoder)
