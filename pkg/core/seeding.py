"""
Named random substreams.

Every random draw in a run flows from one master seed. Streams are keyed by
(name, index) through numpy's SeedSequence spawn keys, so the obstacle draws
of realization 7 never depend on how many fading draws realization 6 made,
and two methods evaluated on the same master seed see the same channels.
"""
import numpy as np

STREAMS = {
    "scene": 0,
    "base_stations": 1,
    "obstacles": 2,
    "fading": 3,
    "exploration": 4,
    "evaluation": 5,
    "training": 6,
    "network": 7,
}


def _sequence(master: int, name: str, index: int) -> np.random.SeedSequence:
    if name not in STREAMS:
        raise KeyError(f"Unknown random stream '{name}'. Known: {sorted(STREAMS)}")
    if master < 0 or index < 0:
        raise ValueError("Seeds and stream indices must be non-negative.")
    return np.random.SeedSequence(entropy=int(master), spawn_key=(STREAMS[name], int(index)))


def derive_seed(master: int, name: str, index: int = 0) -> int:
    """Return a 63-bit integer seed for substream (name, index) of `master`."""
    state = _sequence(master, name, index).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def stream(master: int, name: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(_sequence(master, name, index))


def realization_seeds(master: int, count: int, name: str = "evaluation") -> list:
    """Seeds for `count` channel realizations. Paired comparisons call this once
    and hand the same list to every method."""
    return [derive_seed(master, name, i) for i in range(count)]
