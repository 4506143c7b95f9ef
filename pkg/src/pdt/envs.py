"""Toy environments: a continuous 2-D point mass and a small tabular chain.

Both are deliberately tiny so that reference values (expert returns, random
returns, transition tables) can be computed by brute force.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger("pdt.envs")

POINTMASS_STEP_SIZE = 0.1
POINTMASS_GOAL = (1.0, 1.0)


@dataclass
class ActionSpec:
    kind: str  # "continuous" | "discrete"
    dim: int = 0  # continuous action dimension
    n: int = 0  # number of discrete actions


@dataclass
class Environment:
    """Environment definition; stepping is functional via env_step."""

    id: str
    state_dim: int
    action_spec: ActionSpec
    horizon: int
    reward_fn: Callable  # (state, action, next_state) -> float
    init_state_fn: Callable  # (rng) -> state
    transition_fn: Callable  # (state, action, rng) -> next_state
    discount: float = 0.99  # stored for completeness; returns are undiscounted
    noise_std: float = 0.0
    goal: Optional[np.ndarray] = None


def _pointmass_reward(state, action, next_state, goal):
    dist = float(np.linalg.norm(next_state[:2] - goal))
    return -dist - 0.1 * float(np.dot(action, action))


def make_pointmass(noise_std=0.01, horizon=50, goal=POINTMASS_GOAL, reward_fn=None):
    goal = np.asarray(goal, dtype=np.float64)

    def init_state(rng):
        return rng.uniform(-0.3, 0.3, size=2)

    def transition(state, action, rng):
        nxt = state + POINTMASS_STEP_SIZE * action
        if noise_std > 0:
            nxt = nxt + noise_std * rng.standard_normal(2)
        return nxt

    if reward_fn is None:
        reward_fn = lambda s, a, ns: _pointmass_reward(s, a, ns, goal)

    return Environment(
        id="pointmass2d",
        state_dim=2,
        action_spec=ActionSpec("continuous", dim=2),
        horizon=horizon,
        reward_fn=reward_fn,
        init_state_fn=init_state,
        transition_fn=transition,
        noise_std=noise_std,
        goal=goal,
    )


# Chain of n states; actions: 0 = left, 1 = right, 2 = stay, 3 = jump to start.
CHAIN_N_STATES = 8
CHAIN_N_ACTIONS = 4


def make_chainworld(n_states=CHAIN_N_STATES, horizon=20):
    def init_state(rng):
        return np.array([0.0])

    def transition(state, action, rng):
        s = int(state[0])
        a = int(action)
        if a == 0:
            s2 = max(s - 1, 0)
        elif a == 1:
            s2 = min(s + 1, n_states - 1)
        elif a == 2:
            s2 = s
        else:
            s2 = 0
        return np.array([float(s2)])

    def reward(state, action, next_state):
        # Reaching the right end of the chain pays off.
        return 1.0 if int(next_state[0]) == n_states - 1 else 0.0

    return Environment(
        id="chainworld",
        state_dim=1,
        action_spec=ActionSpec("discrete", n=CHAIN_N_ACTIONS),
        horizon=horizon,
        reward_fn=reward,
        init_state_fn=init_state,
        transition_fn=transition,
    )


def env_step(env, state, action, rng):
    """Advance one step; returns (next_state, reward, done is handled by caller)."""
    state = np.asarray(state, dtype=np.float64)
    if env.action_spec.kind == "continuous":
        action = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(action) > 1.0):
            log.warning("action out of range for %s; clipping", env.id)
            action = np.clip(action, -1.0, 1.0)
    else:
        a = int(action)
        if not 0 <= a < env.action_spec.n:
            raise ValueError(f"discrete action {a} out of range [0, {env.action_spec.n})")
        action = a
    next_state = env.transition_fn(state, action, rng)
    reward = env.reward_fn(state, np.atleast_1d(np.asarray(action, dtype=np.float64)), next_state)
    return next_state, float(reward)


def make_env(env_id, **kwargs):
    if env_id == "pointmass2d":
        return make_pointmass(**kwargs)
    if env_id == "chainworld":
        return make_chainworld(**kwargs)
    raise ValueError(f"unknown environment id {env_id!r}")


# ---------------------------------------------------------------------------
# scripted controllers, used for dataset generation and reference scores


def expert_controller(env, gain=8.0):
    """Proportional controller toward the goal; near-optimal on pointmass2d."""
    goal = env.goal

    def act(state, rng):
        return np.clip(gain * (goal - state[:2]), -1.0, 1.0)

    return act


def noisy_controller(env, gain, noise, rng_unused=None):
    goal = env.goal

    def act(state, rng):
        a = gain * (goal - state[:2]) + noise * rng.standard_normal(2)
        return np.clip(a, -1.0, 1.0)

    return act


def random_controller(env):
    if env.action_spec.kind == "continuous":
        def act(state, rng):
            return rng.uniform(-1.0, 1.0, size=env.action_spec.dim)
    else:
        def act(state, rng):
            return rng.integers(env.action_spec.n)
    return act


def run_episode(env, controller, rng):
    """Roll one episode with a scripted controller; returns (states, actions, rewards)."""
    states, actions, rewards = [], [], []
    s = env.init_state_fn(rng)
    for _ in range(env.horizon):
        a = controller(s, rng)
        s2, r = env_step(env, s, a, rng)
        states.append(s)
        actions.append(np.atleast_1d(np.asarray(a, dtype=np.float64)))
        rewards.append(r)
        s = s2
    return np.array(states), np.array(actions), np.array(rewards)


def monte_carlo_return(env, controller, n_episodes, seed):
    rng = np.random.default_rng(seed)
    return float(np.mean([run_episode(env, controller, rng)[2].sum() for _ in range(n_episodes)]))
