"""Training loops: future-conditioned pretraining, online finetuning with
controllable sampling, rollouts, and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.stats

from . import autodiff as ad
from . import data as D
from . import envs as E
from .autodiff import Tape, Tensor, backward, no_grad
from .config import RunConfig
from .model import (ModelConfig, PDTModel, alpha_update, gaussian_entropy)
from .optim import Optimizer
from .transformer import TransformerConfig

log = logging.getLogger("pdt.training")


# ---------------------------------------------------------------------------
# trajectory sampling


def length_weights(lengths):
    """Algorithm-1 sampling law: p(traj) proportional to its length."""
    lengths = np.asarray(lengths, dtype=np.float64)
    if np.any(lengths <= 0):
        raise ValueError("trajectory lengths must be positive")
    return lengths / lengths.sum()


def return_weights(returns, eps_scale=1e-3):
    """Algorithm-2 sampling law: p(traj) proportional to episodic return.

    Negative or zero returns are undefined under the raw formula; in that
    case weights are min-shifted with a small epsilon so ordering is kept.
    """
    returns = np.asarray(returns, dtype=np.float64)
    lo, hi = returns.min(), returns.max()
    if lo > 0:
        w = returns
    else:
        eps = eps_scale * (hi - lo + 1.0)
        w = returns - lo + eps
    return w / w.sum()


class TrajectorySampler:
    """Validates trajectories against the window length and draws batches."""

    def __init__(self, trajectories, k):
        for i, t in enumerate(trajectories):
            if len(t) < k + 1:
                raise ValueError(
                    f"trajectory {i} has length {len(t)} < K+1 = {k + 1}")
        self.trajectories = list(trajectories)
        self.k = k

    def sample_batch(self, rng, batch_size, probs):
        idx = rng.choice(len(self.trajectories), size=batch_size, p=probs)
        windows = [D.sample_window(self.trajectories[i], self.k, rng) for i in idx]
        batch = {
            "states": np.stack([w["context"]["states"] for w in windows]),
            "actions": np.stack([w["context"]["actions"] for w in windows]),
            "future_states": np.stack([w["future_states"] for w in windows]),
            "future_actions": np.stack([w["future_actions"] for w in windows]),
            "future_mask": np.stack([w["future_mask"] for w in windows]),
        }
        if all("rtg" in w["context"] for w in windows):
            batch["rtg"] = np.stack([w["context"]["rtg"] for w in windows])
        return batch


# ---------------------------------------------------------------------------
# replay buffer


class ReplayBuffer:
    """FIFO trajectory store with cached episodic returns."""

    def __init__(self, capacity):
        if capacity <= 0:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self.trajectories = []
        self.returns = []

    def insert(self, traj):
        self.trajectories.append(traj)
        self.returns.append(traj.episodic_return)
        if len(self.trajectories) > self.capacity:
            self.trajectories.pop(0)
            self.returns.pop(0)

    def __len__(self):
        return len(self.trajectories)

    def rtg_stats(self):
        """Mean/std of per-step return-to-go across the buffer (label scaling)."""
        values = np.concatenate([D.return_to_go(t.rewards) for t in self.trajectories])
        mu = float(values.mean())
        sigma = float(values.std())
        return mu, max(sigma, 1e-6)


# ---------------------------------------------------------------------------
# train state


@dataclass
class TrainState:
    cfg: RunConfig
    model: PDTModel
    main_opt: Optimizer
    alpha_opt: Optimizer
    env: E.Environment
    stats: D.NormalizationStats
    rng: np.random.Generator
    buffer: Optional[ReplayBuffer] = None
    rtg_mu: float = 0.0
    rtg_sigma: float = 1.0
    pretrain_steps: int = 0
    finetune_steps: int = 0
    env_transitions: int = 0
    episodes_collected: int = 0
    warmup_done: bool = False
    warmup_opt: Optional[Optimizer] = None


def build_state(cfg: RunConfig, stats, conditioning="future", env=None):
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    env = env or E.make_env(cfg.env_id)
    tf_cfg = TransformerConfig(
        n_layers=cfg.model.n_layers,
        n_heads=cfg.model.n_heads,
        embed_dim=cfg.model.embed_dim,
        dropout_rate=cfg.model.dropout,
        context_len=cfg.model.context_len,
    )
    action_dim = env.action_spec.dim if env.action_spec.kind == "continuous" else 1
    mcfg = ModelConfig(
        state_dim=env.state_dim,
        action_dim=action_dim,
        transformer=tf_cfg,
        d_z=cfg.model.d_z,
        latent_mode=cfg.model.latent_mode,
        conditioning=conditioning,
        mlp_hidden=cfg.model.mlp_hidden,
    )
    model = PDTModel(mcfg, rng)
    main_opt = Optimizer(model.main_params(), lr=cfg.optim.lr,
                         weight_decay=cfg.optim.weight_decay, mode=cfg.optim.optimizer)
    alpha_opt = Optimizer([model.log_alpha], lr=cfg.optim.alpha_lr)
    return TrainState(cfg=cfg, model=model, main_opt=main_opt, alpha_opt=alpha_opt,
                      env=env, stats=stats, rng=rng,
                      buffer=ReplayBuffer(cfg.finetune.buffer_capacity))


def _lr_scale(state):
    warm = state.cfg.optim.lr_warmup_steps
    step = state.pretrain_steps + state.finetune_steps + 1
    return min(1.0, step / warm) if warm > 0 else 1.0


def _normalize_rtg(state, rtg):
    return (np.asarray(rtg, np.float32) - state.rtg_mu) / state.rtg_sigma


# ---------------------------------------------------------------------------
# gradient steps


def _zero_all(state):
    for p in state.model.main_params():
        p.zero_grad()
    state.model.log_alpha.zero_grad()


def pdt_losses(state, batch, beta, with_return, training=True):
    """Forward pass shared by pretraining and finetuning updates."""
    model = state.model
    rng = state.rng
    b, k = batch["states"].shape[:2]
    eps = rng.standard_normal((b, k, model.cfg.d_z)).astype(np.float32)
    latents = model.encode_future(batch["future_states"], batch["future_actions"],
                                  batch["future_mask"], eps, rng, training)
    cond = model.conditioning_tokens(latents, k)
    pol = model.policy_forward(batch["states"], batch["actions"], cond, rng, training)
    loss_bc, ent = model.loss_bc(pol, batch["actions"])
    loss_fut, reg, fit = model.loss_future(latents, batch["states"], beta)
    out = {"loss_bc": loss_bc, "loss_future": loss_fut, "kl_reg": reg, "kl_prior": fit,
           "entropy": float(ent.data.mean())}
    total = loss_bc + loss_fut
    if with_return:
        loss_ret = model.loss_return(latents, batch["states"],
                                     _normalize_rtg(state, batch["rtg"]),
                                     mask=batch["future_mask"])
        out["loss_return"] = loss_ret
        total = total + loss_ret
    out["total"] = total
    return out


def odt_losses(state, batch, mask_conditioning=False, training=True):
    """Return-conditioned baseline loss (Rewardless-DT masks the returns)."""
    model = state.model
    cond = _normalize_rtg(state, batch["rtg"])[..., None] if not mask_conditioning else None
    pol = model.policy_forward(batch["states"], batch["actions"], cond,
                               state.rng, training, mask_conditioning=mask_conditioning)
    loss, ent = model.loss_bc(pol, batch["actions"])
    return {"loss_bc": loss, "total": loss, "entropy": float(ent.data.mean())}


def _apply_update(state, losses, param_subset=None):
    backward(losses["total"])
    opt = state.warmup_opt if param_subset == "return" else state.main_opt
    opt.step(grad_clip=state.cfg.optim.grad_clip, lr_scale=_lr_scale(state))
    _zero_all(state)
    alpha_update(state.model, state.alpha_opt, losses["entropy"])


# ---------------------------------------------------------------------------
# pretraining (Algorithm 1)


def pretrain(dataset, cfg: RunConfig, metrics=None, conditioning="future",
             mask_conditioning=False, state=None):
    """Future-conditioned pretraining over an offline dataset.

    conditioning="future" is PDT; "return" is the ODT baseline (set
    mask_conditioning=True for Rewardless-DT). A reward-labeled dataset is
    accepted for PDT but its rewards are ignored with a warning.
    """
    if state is None:
        state = build_state(cfg, dataset.stats, conditioning=conditioning,
                            env=E.make_env(cfg.env_id))
    if conditioning == "future" and dataset.reward_labeled:
        log.warning("PDT pretraining ignores rewards; using the reward-free view")
        dataset = dataset.reward_free()
    if conditioning == "return":
        if not dataset.reward_labeled:
            raise ValueError("return-conditioned pretraining needs rewards")
        all_rtg = np.concatenate([D.return_to_go(t.rewards) for t in dataset.trajectories])
        state.rtg_mu = float(all_rtg.mean())
        state.rtg_sigma = max(float(all_rtg.std()), 1e-6)

    sampler = TrajectorySampler(dataset.trajectories, cfg.model.context_len)
    probs = length_weights([len(t) for t in sampler.trajectories])
    for _ in range(cfg.pretrain.iterations):
        batch = sampler.sample_batch(state.rng, cfg.optim.batch_size, probs)
        with Tape():
            if conditioning == "future":
                losses = pdt_losses(state, batch, cfg.pretrain.beta, with_return=False)
            else:
                losses = odt_losses(state, batch, mask_conditioning=mask_conditioning)
            _apply_update(state, losses)
        state.pretrain_steps += 1
        if metrics is not None:
            for tag in ("total", "loss_bc", "loss_future"):
                if tag in losses:
                    metrics.log(state.pretrain_steps, "pretrain", tag,
                                float(losses[tag].data))
            metrics.log(state.pretrain_steps, "pretrain", "entropy", losses["entropy"])
            metrics.log(state.pretrain_steps, "pretrain", "alpha", state.model.alpha)
    return state


# ---------------------------------------------------------------------------
# rollouts


def controllable_sample(state, s, percentile, n_candidates=None):
    """Draw latents from the prior and pick the percentile by predicted return."""
    n = state.cfg.finetune.future_batch if n_candidates is None else n_candidates
    if n < 1:
        raise ValueError("n_candidates must be >= 1")
    model = state.model
    with no_grad():
        prior = model.prior_forward(np.asarray(s, np.float32)[None, :])
        mu, std = prior.mean.data[0], prior.std[0]
        zs = mu + std * state.rng.standard_normal((n, model.cfg.d_z)).astype(np.float32)
        states = np.repeat(np.asarray(s, np.float32)[None, :], n, axis=0)
        pred = model.return_forward(zs, states)
        means = pred.dist.mean.data[:, 0]
    order = np.argsort(means, kind="stable")
    pick = order[int(round(percentile / 100.0 * (n - 1)))]
    return zs[pick]


def _prior_sample(state, s):
    with no_grad():
        prior = state.model.prior_forward(np.asarray(s, np.float32)[None, :])
    mu, std = prior.mean.data[0], prior.std[0]
    return (mu + std * state.rng.standard_normal(state.model.cfg.d_z).astype(np.float32))


def _policy_act(state, cond_hist, s_hist, a_hist, explore):
    """One action from the policy given the evaluation context window."""
    model = state.model
    k = len(s_hist)
    states = np.stack(s_hist)[None, :]
    actions = np.stack(a_hist)[None, :]
    cond = np.stack(cond_hist)[None, :]
    with no_grad():
        pol = model.policy_forward(states, actions, cond, drop_last_action=True)
    mu = pol.dist.mean.data[0, k - 1]
    if explore:
        std = pol.dist.std[0, k - 1]
        u = mu + std * state.rng.standard_normal(mu.shape).astype(np.float32)
    else:
        u = mu
    return np.tanh(u)


def rollout(state, mode="prior", percentile=100.0, target_return=None, env=None,
            explore=True, collect_metrics=None):
    """Collect one episode.

    mode "prior": z resampled from the prior each step.
    mode "controllable": z chosen by ranking prior samples with the return
    predictor at the given percentile.
    mode "odt": conditioning on a decreasing return-to-go target.
    """
    env = env or state.env
    cfg = state.cfg
    k_eval = cfg.model.eval_context_len
    resample = cfg.finetune.resample_latent_every_step
    model = state.model
    rng = state.rng

    s = env.init_state_fn(rng)
    s_hist, a_hist, cond_hist = [], [], []
    states, actions, rewards = [], [], []
    z = None
    collected = 0.0
    for t in range(env.horizon):
        s32 = np.asarray(s, np.float32)
        if model.cfg.conditioning == "future":
            if z is None or (resample or t % k_eval == 0):
                if mode == "controllable":
                    z = controllable_sample(state, s32, percentile)
                else:
                    z = _prior_sample(state, s32)
            cond = z
        else:
            if target_return is None:
                raise ValueError("odt rollout requires a target return")
            rtg = target_return - collected
            cond = np.array([(rtg - state.rtg_mu) / state.rtg_sigma], np.float32)

        s_hist.append(s32)
        cond_hist.append(cond)
        a_hist.append(np.zeros(model.cfg.action_dim, np.float32))  # placeholder
        if len(s_hist) > k_eval:
            s_hist.pop(0), a_hist.pop(0), cond_hist.pop(0)
        a = _policy_act(state, cond_hist, s_hist, a_hist, explore)
        a_hist[-1] = a.astype(np.float32)

        s2, r = E.env_step(env, s, a, rng)
        states.append(s32)
        actions.append(a.astype(np.float32))
        rewards.append(r)
        collected += r
        s = s2
    return D.Trajectory(np.array(states), np.array(actions), np.array(rewards, np.float32))


def evaluate(state, n_episodes=None, env=None, stats=None, mode=None, target_return=None):
    """Mean and 95% t-interval of the normalized score over eval episodes."""
    n = state.cfg.finetune.eval_episodes if n_episodes is None else n_episodes
    if n < 1:
        raise ValueError("n_episodes must be >= 1")
    env = env or state.env
    stats = stats or state.stats
    if mode is None:
        mode = "controllable" if state.model.cfg.conditioning == "future" else "odt"
    if mode == "odt" and target_return is None:
        target_return = stats.best_score
    scores = []
    for _ in range(n):
        traj = rollout(state, mode=mode, percentile=100.0, target_return=target_return,
                       env=env, explore=False)
        scores.append(D.normalized_score(traj.episodic_return, stats))
    scores = np.array(scores)
    mean = float(scores.mean())
    if n > 1 and scores.std(ddof=1) > 0:
        half = float(scipy.stats.t.ppf(0.975, n - 1) * scores.std(ddof=1) / np.sqrt(n))
    elif n > 1:
        half = 0.0
    else:
        half = None
    return mean, half


# ---------------------------------------------------------------------------
# finetuning (Algorithm 2)


def _finetune_batch(state):
    cfg = state.cfg
    sampler = TrajectorySampler(state.buffer.trajectories, cfg.model.context_len)
    probs = return_weights(state.buffer.returns)
    return sampler.sample_batch(state.rng, cfg.optim.batch_size, probs)


def _insert_rollout(state, traj):
    state.buffer.insert(traj)
    state.env_transitions += len(traj)
    state.episodes_collected += 1
    state.rtg_mu, state.rtg_sigma = state.buffer.rtg_stats()


def finetune(state, metrics=None, frozen_except_return=False):
    """Online finetuning: fill the buffer with prior rollouts, warm up the
    return predictor, then alternate controllable rollouts with gradient
    steps on the combined loss. Resumes from the state's counters."""
    cfg = state.cfg
    model = state.model
    is_pdt = model.cfg.conditioning == "future"
    ft = cfg.finetune

    def maybe_eval():
        if metrics is None:
            return
        mean, half = evaluate(state)
        metrics.log(state.env_transitions, "eval", "normalized_score", mean)
        if half is not None:
            metrics.log(state.env_transitions, "eval", "score_ci95", half)

    # Phase 1: initialize the buffer with exploratory rollouts.
    while state.env_transitions < ft.init_transitions:
        mode = "prior" if is_pdt else "odt"
        traj = rollout(state, mode=mode, target_return=state.stats.best_score,
                       explore=True)
        _insert_rollout(state, traj)

    # Phase 2: return-predictor warmup; every other parameter stays frozen.
    if is_pdt and not state.warmup_done:
        if state.warmup_opt is None:
            f_params = [p for n, p in state.model.main_named_params()
                        if n.startswith("return_net")]
            state.warmup_opt = Optimizer(f_params, lr=cfg.optim.lr,
                                         weight_decay=cfg.optim.weight_decay,
                                         mode=cfg.optim.optimizer)
        for i in range(ft.return_warmup_steps):
            batch = _finetune_batch(state)
            with Tape():
                b, k = batch["states"].shape[:2]
                eps = state.rng.standard_normal((b, k, model.cfg.d_z)).astype(np.float32)
                latents = model.encode_future(batch["future_states"],
                                              batch["future_actions"],
                                              batch["future_mask"], eps)
                loss = model.loss_return(latents, batch["states"],
                                         _normalize_rtg(state, batch["rtg"]),
                                         mask=batch["future_mask"])
                backward(loss)
            state.warmup_opt.step(grad_clip=cfg.optim.grad_clip)
            _zero_all(state)
            if metrics is not None:
                metrics.log(i + 1, "warmup", "loss_return", float(loss.data))
        state.warmup_done = True
        maybe_eval()

    # Phase 3: alternate controllable rollouts with gradient updates.
    next_eval = (state.env_transitions // ft.eval_every + 1) * ft.eval_every
    while state.env_transitions < ft.total_transitions:
        if is_pdt:
            traj = rollout(state, mode="controllable", percentile=ft.percentile,
                           explore=True)
        else:
            traj = rollout(state, mode="odt", target_return=state.stats.best_score,
                           explore=True)
        _insert_rollout(state, traj)
        for _ in range(ft.updates_per_rollout):
            batch = _finetune_batch(state)
            with Tape():
                if is_pdt:
                    losses = pdt_losses(state, batch, ft.beta, with_return=True)
                else:
                    losses = odt_losses(state, batch)
                if frozen_except_return:
                    backward(losses["loss_return"])
                    state.warmup_opt.step(grad_clip=cfg.optim.grad_clip)
                    _zero_all(state)
                else:
                    _apply_update(state, losses)
            state.finetune_steps += 1
            if metrics is not None:
                metrics.log(state.finetune_steps, "finetune", "total",
                            float(losses["total"].data))
                if "loss_return" in losses:
                    metrics.log(state.finetune_steps, "finetune", "loss_return",
                                float(losses["loss_return"].data))
        if state.env_transitions >= next_eval:
            maybe_eval()
            next_eval += ft.eval_every
    return state
