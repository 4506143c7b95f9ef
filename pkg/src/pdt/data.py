"""Trajectory containers, offline dataset generation, and score normalization.

Dataset files are JSON lines: one metadata header line followed by one
trajectory per line. Generation is fully reproducible from (env, profile,
n, seed).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import envs as E

log = logging.getLogger("pdt.data")

PROFILES = ("random", "medium", "medium-replay", "expert")

# Pointmass controller settings per profile; medium lands near half of the
# expert's normalized score, medium-replay mixes competences from random up
# to medium so episodic returns span a wide range.
MEDIUM_GAIN = 0.4
MEDIUM_NOISE = 0.4
REFERENCE_EPISODES = 1000
REFERENCE_SEED = 777


@dataclass
class NormalizationStats:
    random_score: float
    best_score: float


@dataclass
class Trajectory:
    states: np.ndarray  # (T, state_dim) float32
    actions: np.ndarray  # (T, action_dim) float32
    rewards: Optional[np.ndarray] = None  # (T,) float32

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float32)
        self.actions = np.asarray(self.actions, dtype=np.float32)
        if self.rewards is not None:
            self.rewards = np.asarray(self.rewards, dtype=np.float32)
            if len(self.rewards) != len(self.states):
                raise ValueError("states/rewards length mismatch")
        if len(self.states) != len(self.actions):
            raise ValueError("states/actions length mismatch")

    def __len__(self):
        return len(self.states)

    @property
    def episodic_return(self):
        if self.rewards is None:
            raise ValueError("trajectory carries no rewards")
        return float(self.rewards.astype(np.float64).sum())

    def reward_free(self):
        return Trajectory(self.states.copy(), self.actions.copy(), None)


@dataclass
class OfflineDataset:
    trajectories: list
    env_id: str
    profile: str
    seed: int
    reward_labeled: bool
    stats: NormalizationStats
    horizon: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("dataset must contain at least one trajectory")

    def reward_free(self):
        out = replace(self, trajectories=[t.reward_free() for t in self.trajectories])
        out.reward_labeled = False
        return out

    @property
    def returns(self):
        return np.array([t.episodic_return for t in self.trajectories])


def return_to_go(rewards):
    """Suffix sums: output[t] = sum of rewards from t to the end."""
    rewards = np.asarray(rewards, dtype=np.float32)
    if rewards.size == 0:
        return rewards.copy()
    return np.cumsum(rewards[::-1], dtype=np.float64)[::-1].astype(np.float32)


def normalized_score(raw, stats):
    if stats.best_score <= stats.random_score:
        raise ValueError(
            f"degenerate normalization stats: best {stats.best_score} <= random {stats.random_score}"
        )
    return 100.0 * (raw - stats.random_score) / (stats.best_score - stats.random_score)


def reference_stats(env, n_episodes=REFERENCE_EPISODES, seed=REFERENCE_SEED):
    """Monte-Carlo random/expert reference returns for score normalization."""
    random_score = E.monte_carlo_return(env, E.random_controller(env), n_episodes, seed)
    if env.action_spec.kind == "continuous":
        expert = E.expert_controller(env)
    else:
        expert = _chain_expert()
    best_score = E.monte_carlo_return(env, expert, n_episodes, seed + 1)
    return NormalizationStats(random_score, best_score)


def _chain_expert():
    def act(state, rng):
        return 1  # always move right
    return act


def _profile_controller(env, profile, traj_rng):
    """Controller for one trajectory; medium-replay draws a fresh competence."""
    if env.action_spec.kind == "discrete":
        if profile == "expert":
            return _chain_expert()
        return E.random_controller(env)
    if profile == "random":
        return E.random_controller(env)
    if profile == "expert":
        return E.expert_controller(env)
    if profile == "medium":
        return E.noisy_controller(env, MEDIUM_GAIN, MEDIUM_NOISE)
    if profile == "medium-replay":
        # Competence in [0, 1]: 0 is pure random, 1 matches the medium policy.
        c = traj_rng.uniform(0.0, 1.0)
        gain = c * MEDIUM_GAIN
        noise = (1.0 - c) * 1.0 + c * MEDIUM_NOISE
        return E.noisy_controller(env, gain, noise)
    raise ValueError(f"unknown dataset profile {profile!r}")


def generate_dataset(env, profile, n_trajectories, seed, stats=None):
    """Generate a reward-labeled offline dataset; see PROFILES for choices."""
    if profile not in PROFILES:
        raise ValueError(f"unknown dataset profile {profile!r}; choose from {PROFILES}")
    if n_trajectories <= 0:
        raise ValueError(f"n_trajectories must be positive, got {n_trajectories}")
    if stats is None:
        stats = reference_stats(env)
    root = np.random.default_rng(seed)
    # Independent per-episode streams keep generation order-insensitive.
    seeds = root.integers(0, 2**63 - 1, size=n_trajectories)
    trajectories = []
    for s in seeds:
        rng = np.random.default_rng(int(s))
        controller = _profile_controller(env, profile, rng)
        states, actions, rewards = E.run_episode(env, controller, rng)
        trajectories.append(Trajectory(states, actions, rewards))
    return OfflineDataset(
        trajectories=trajectories,
        env_id=env.id,
        profile=profile,
        seed=seed,
        reward_labeled=True,
        stats=stats,
        horizon=env.horizon,
        noise_std=env.noise_std,
    )


_CIRCLE_GOALS = tuple(
    (float(np.cos(a)), float(np.sin(a))) for a in np.linspace(0, 2 * np.pi, 8, endpoint=False)
)


def multimodal_dataset(env, n_trajectories, seed, goals=_CIRCLE_GOALS,
                       gain=0.8, noise=0.2, horizon=12, state_noise=0.1):
    """Mixture of controllers toward goals spread around the unit circle
    (deliberately multimodal; opposing pairs included).

    The setting is tuned so that which controller generated a window stays
    ambiguous from the context alone while the future window reveals it:
    episodes are short and the per-trajectory goal direction is only coarsely
    estimable from a few noisy past actions, so a model that encodes the
    future can sharpen its action prediction at every position, while one
    that cannot see it must hedge over the remaining directions.
    """
    if n_trajectories <= 0:
        raise ValueError("n_trajectories must be positive")
    if env.id != "pointmass2d":
        raise ValueError("multimodal_dataset is defined for pointmass2d")
    # Rebuilt rather than dataclasses.replace()d: the transition closure
    # captures the noise level, so field surgery would not change the dynamics.
    env = E.make_pointmass(noise_std=state_noise, horizon=horizon)
    stats = reference_stats(env)
    root = np.random.default_rng(seed)
    seeds = root.integers(0, 2**63 - 1, size=n_trajectories)
    trajectories = []
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        goal = np.asarray(goals[i % len(goals)], dtype=np.float64)
        sub_env = replace(env, goal=goal)
        controller = E.noisy_controller(sub_env, gain, noise)
        states, actions, rewards = E.run_episode(env, controller, rng)
        trajectories.append(Trajectory(states, actions, rewards))
    return OfflineDataset(trajectories, env.id, "multimodal", seed, True, stats,
                          env.horizon, env.noise_std)


# ---------------------------------------------------------------------------
# windows


def sample_window(traj, k, rng):
    """Uniformly sample a length-k context window plus its future window.

    The context window is always fully inside the trajectory; the future
    window may extend past the end, in which case it is zero-padded with
    mask bits cleared. Trajectories shorter than k+1 are invalid.
    """
    if k < 1:
        raise ValueError("window length must be >= 1")
    t_len = len(traj)
    if t_len < k + 1:
        raise ValueError(f"trajectory of length {t_len} too short for window K={k}")
    start = int(rng.integers(0, t_len - k))
    return extract_window(traj, start, k)


def extract_window(traj, start, k):
    ds, da = traj.states.shape[1], traj.actions.shape[1]
    ctx = {
        "states": traj.states[start : start + k],
        "actions": traj.actions[start : start + k],
    }
    if traj.rewards is not None:
        rtg = return_to_go(traj.rewards)
        ctx["rtg"] = rtg[start : start + k]
    fut_start = start + k
    fut_real = min(k, len(traj) - fut_start)
    f_states = np.zeros((k, ds), np.float32)
    f_actions = np.zeros((k, da), np.float32)
    mask = np.zeros(k, bool)
    f_states[:fut_real] = traj.states[fut_start : fut_start + fut_real]
    f_actions[:fut_real] = traj.actions[fut_start : fut_start + fut_real]
    mask[:fut_real] = True
    return {
        "start": start,
        "context": ctx,
        "future_states": f_states,
        "future_actions": f_actions,
        "future_mask": mask,
    }


# ---------------------------------------------------------------------------
# persistence


def save_dataset(dataset, path):
    header = {
        "env": dataset.env_id,
        "profile": dataset.profile,
        "seed": dataset.seed,
        "reward_labeled": dataset.reward_labeled,
        "random_score": dataset.stats.random_score,
        "best_score": dataset.stats.best_score,
        "horizon": dataset.horizon,
        "noise_std": dataset.noise_std,
        "n_trajectories": len(dataset.trajectories),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for traj in dataset.trajectories:
            row = {
                "states": [[float(v) for v in s] for s in traj.states],
                "actions": [[float(v) for v in a] for a in traj.actions],
                "rewards": None if traj.rewards is None else [float(r) for r in traj.rewards],
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_dataset(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        trajectories = []
        for line in fh:
            row = json.loads(line)
            rewards = row["rewards"]
            trajectories.append(
                Trajectory(np.array(row["states"], np.float32),
                           np.array(row["actions"], np.float32),
                           None if rewards is None else np.array(rewards, np.float32))
            )
    return OfflineDataset(
        trajectories=trajectories,
        env_id=header["env"],
        profile=header["profile"],
        seed=header["seed"],
        reward_labeled=header["reward_labeled"],
        stats=NormalizationStats(header["random_score"], header["best_score"]),
        horizon=header.get("horizon", 0),
        noise_std=header.get("noise_std", 0.0),
    )
