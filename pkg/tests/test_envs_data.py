"""Environment and dataset tests."""

import dataclasses

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from pdt import data as D
from pdt import envs as E


def test_pointmass_transition_math():
    env = E.make_pointmass(noise_std=0.0)
    rng = np.random.default_rng(0)
    s = np.array([0.0, 0.0])
    a = np.array([1.0, -0.5])
    s2, r = E.env_step(env, s, a, rng)
    assert np.allclose(s2, [0.1, -0.05])
    expect = -np.linalg.norm(s2 - env.goal) - 0.1 * np.dot(a, a)
    assert r == pytest.approx(expect)


def test_env_step_clips_continuous_actions(caplog):
    env = E.make_pointmass(noise_std=0.0)
    rng = np.random.default_rng(0)
    s2, _ = E.env_step(env, np.zeros(2), np.array([5.0, 0.0]), rng)
    assert np.allclose(s2, [0.1, 0.0])  # clipped to 1.0


def test_chainworld_dynamics_and_oob():
    env = E.make_chainworld()
    rng = np.random.default_rng(0)
    s = np.array([0.0])
    for _ in range(10):
        s, r = E.env_step(env, s, 1, rng)  # move right
    assert s[0] == E.CHAIN_N_STATES - 1 and r == 1.0
    s, _ = E.env_step(env, s, 3, rng)  # jump to start
    assert s[0] == 0.0
    with pytest.raises(ValueError, match="out of range"):
        E.env_step(env, s, 7, rng)


def test_reference_stats_order():
    env = E.make_pointmass()
    stats = D.reference_stats(env, n_episodes=50)
    assert stats.best_score > stats.random_score
    assert D.normalized_score(stats.random_score, stats) == pytest.approx(0.0)
    assert D.normalized_score(stats.best_score, stats) == pytest.approx(100.0)


def test_profile_quality_ordering():
    env = E.make_pointmass()
    stats = D.reference_stats(env, n_episodes=100)
    means = {}
    for profile in ("random", "medium", "expert"):
        ds = D.generate_dataset(env, profile, 30, seed=1, stats=stats)
        means[profile] = ds.returns.mean()
    assert means["random"] < means["medium"] < means["expert"]


def test_medium_replay_spans_wide_range():
    env = E.make_pointmass()
    stats = D.reference_stats(env, n_episodes=100)
    ds = D.generate_dataset(env, "medium-replay", 100, seed=2, stats=stats)
    scores = [D.normalized_score(r, stats) for r in ds.returns]
    assert max(scores) - min(scores) > 30.0


def test_dataset_reproducible_and_seed_sensitive():
    env = E.make_pointmass()
    stats = D.NormalizationStats(-77.0, -9.4)
    a = D.generate_dataset(env, "medium-replay", 10, seed=5, stats=stats)
    b = D.generate_dataset(env, "medium-replay", 10, seed=5, stats=stats)
    c = D.generate_dataset(env, "medium-replay", 10, seed=6, stats=stats)
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert np.array_equal(ta.states, tb.states)
        assert np.array_equal(ta.rewards, tb.rewards)
    assert not np.array_equal(a.trajectories[0].states, c.trajectories[0].states)


def test_jsonl_round_trip_exact(tmp_path):
    env = E.make_pointmass()
    stats = D.NormalizationStats(-77.0, -9.4)
    ds = D.generate_dataset(env, "random", 5, seed=3, stats=stats)
    path = tmp_path / "d.jsonl"
    D.save_dataset(ds, path)
    loaded = D.load_dataset(path)
    assert loaded.env_id == ds.env_id and loaded.profile == ds.profile
    assert loaded.stats == ds.stats
    for ta, tb in zip(ds.trajectories, loaded.trajectories):
        assert np.array_equal(ta.states, tb.states)
        assert np.array_equal(ta.actions, tb.actions)
        assert np.array_equal(ta.rewards, tb.rewards)


def test_reward_free_view():
    env = E.make_pointmass()
    ds = D.generate_dataset(env, "random", 3, seed=0,
                            stats=D.NormalizationStats(-77.0, -9.4))
    free = ds.reward_free()
    assert not free.reward_labeled
    assert all(t.rewards is None for t in free.trajectories)
    assert ds.trajectories[0].rewards is not None  # original untouched
    with pytest.raises(ValueError, match="no rewards"):
        free.trajectories[0].episodic_return


def test_return_to_go_oracle():
    rewards = np.array([1.0, -2.0, 3.0, 0.5])
    rtg = D.return_to_go(rewards)
    expect = [sum(rewards[i:]) for i in range(4)]
    assert np.allclose(rtg, expect, atol=1e-6)
    assert D.return_to_go(np.array([])).size == 0


def test_normalized_score_degenerate_raises():
    with pytest.raises(ValueError, match="degenerate"):
        D.normalized_score(1.0, D.NormalizationStats(5.0, 5.0))


def test_window_rejects_short_trajectories():
    traj = D.Trajectory(np.zeros((4, 2)), np.zeros((4, 2)), np.zeros(4))
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="too short"):
        D.sample_window(traj, 4, rng)
    D.sample_window(traj, 3, rng)  # K+1 = 4 is allowed


def test_window_start_indices_uniform():
    t_len, k = 20, 5
    traj = D.Trajectory(np.zeros((t_len, 2)), np.zeros((t_len, 2)), np.zeros(t_len))
    rng = np.random.default_rng(0)
    n_starts = t_len - k  # starts 0 .. T-K-1 inclusive
    counts = np.zeros(n_starts)
    draws = 20_000
    for _ in range(draws):
        counts[D.sample_window(traj, k, rng)["start"]] += 1
    p = scipy.stats.chisquare(counts).pvalue
    assert p > 0.01


@settings(deadline=None, max_examples=40)
@given(t_len=st.integers(4, 30), k=st.integers(1, 10), start=st.integers(0, 29))
def test_extract_window_invariants(t_len, k, start):
    if t_len < k + 1 or start > t_len - k - 1:
        return
    states = np.arange(t_len * 2, dtype=np.float32).reshape(t_len, 2)
    rewards = np.arange(t_len, dtype=np.float32)
    traj = D.Trajectory(states, states.copy(), rewards)
    w = D.extract_window(traj, start, k)
    assert np.array_equal(w["context"]["states"], states[start:start + k])
    fut_real = min(k, t_len - start - k)
    assert w["future_mask"].sum() == fut_real
    assert np.array_equal(w["future_states"][:fut_real],
                          states[start + k:start + k + fut_real])
    assert np.all(w["future_states"][fut_real:] == 0)
    rtg = D.return_to_go(rewards)
    assert np.allclose(w["context"]["rtg"], rtg[start:start + k])


def test_multimodal_dataset_has_two_modes():
    env = E.make_pointmass()
    ds = D.multimodal_dataset(env, 10, seed=0)
    finals = np.array([t.states[-1] for t in ds.trajectories])
    # Alternating goals at (1,1) and (-1,-1): both quadrants reached.
    assert (finals.sum(axis=1) > 0.5).any() and (finals.sum(axis=1) < -0.5).any()


def test_trajectory_length_validation():
    with pytest.raises(ValueError, match="mismatch"):
        D.Trajectory(np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="mismatch"):
        D.Trajectory(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(2))
