import numpy as np
import pandas as pd
import pytest

from core.agent import TrainConfig, value_iteration
from core.baselines import MultiConnectivityPolicy, baseline_learned_handover, baseline_multiconnectivity
from core.env import run_episode
from core.errors import ConfigError
from core.links import make_env, scripted_env

# UE walks x = 0, 1, 2, ... along y = 0
SITES = [(0.0, 5.0), (3.0, 5.0), (10.0, 5.0)]


def test_strong_links_never_hand_over():
    env = scripted_env(np.full((8, 3), 20.0))
    trace = baseline_multiconnectivity(env, seed=0, bs_positions=SITES)
    assert not trace["handover"].any()
    assert (trace["tracking"] == 0).all()
    assert (trace["tau_b_us"] == 0.0).all()


def test_blockage_switches_to_nearest_other_bs():
    peak = np.full((8, 3), 20.0)
    peak[4, 0] = 0.0  # BS 1 blocked at slot 5
    env = scripted_env(peak)
    trace = baseline_multiconnectivity(env, seed=0, bs_positions=SITES)
    row = trace.loc[trace["slot"] == 5].iloc[0]
    assert row["handover"]
    # Nearest to the slot-4 position (3, 0) apart from BS 1.
    assert row["serving_bs"] == 2
    assert row["tau_b_us"] == pytest.approx(1e6 * 10e-3 / 3.0, rel=1e-12)
    assert trace["handover"].sum() == 1


def test_weak_links_alternate_every_slot():
    env = scripted_env(np.full((6, 2), 0.0))
    trace = baseline_multiconnectivity(env, seed=0, bs_positions=SITES[:2])
    assert trace["handover"].all()
    assert list(trace["serving_bs"]) == [2, 1, 2, 1, 2, 1]


def test_backup_uses_previous_position():
    env = scripted_env(np.full((4, 3), 0.0))
    policy = MultiConnectivityPolicy(env, SITES)
    state = env.reset(0)
    assert policy.backup(state) == 2  # slot 1 looks at its own position
    env.step(policy(state))
    state = env.step(policy(env.state)).next_state
    assert policy.backup(state) in (1, 2, 3)
    assert policy.backup(state) != state.serving_bs


def test_single_bs_is_rejected():
    env = scripted_env(np.full((4, 1), 20.0))
    with pytest.raises(ConfigError):
        MultiConnectivityPolicy(env, [(0.0, 5.0)])


def test_site_count_must_match():
    env = scripted_env(np.full((4, 3), 20.0))
    with pytest.raises(ConfigError):
        MultiConnectivityPolicy(env, SITES[:2])


def test_positions_default_to_scenario_sites(small_scenario):
    env = make_env(small_scenario)
    trace = baseline_multiconnectivity(env, seed=2)
    assert len(trace) == small_scenario.slots
    assert (trace["tracking"] == 0).all()


def test_learned_handover_never_tracks(toy_env):
    cfg = TrainConfig(episodes=3, batch_size=8, buffer_size=64, target_sync=10, hidden_sizes=(16,))
    policy, curve = baseline_learned_handover(lambda: toy_env, cfg)
    assert policy.actions == (1, 2)
    assert len(curve) == 3
    trace = run_episode(toy_env, policy, seed=0)
    assert (trace["tracking"] == 0).all()
    assert (trace.loc[trace["decision"], "action"] != 0).all()


def test_learned_handover_matches_rate_optimum(toy_env):
    _, optimal = value_iteration(toy_env, actions=(1, 2), reward="rate")
    cfg = TrainConfig(episodes=1500, batch_size=32, buffer_size=10_000, target_sync=100, seed=0)
    policy, _ = baseline_learned_handover(lambda: toy_env, cfg)

    def decisions(trace):
        return trace.loc[trace["decision"], ["slot", "action", "serving_bs"]].reset_index(drop=True)

    pd.testing.assert_frame_equal(
        decisions(run_episode(toy_env, policy, seed=0)),
        decisions(run_episode(toy_env, optimal, seed=0)),
    )


def test_rate_optimum_on_toy_hands_over(toy_env):
    _, optimal = value_iteration(toy_env, actions=(1, 2), reward="rate")
    trace = run_episode(toy_env, optimal, seed=0)
    assert trace.loc[trace["slot"] == 4, "serving_bs"].item() == 2
    assert (trace["serving_bs"].iloc[3:] == 2).all()
