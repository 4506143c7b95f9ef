"""Desk-scale analyses: behavior diversity, controllable-sampling percentile
studies, masked-future and frozen-parameter ablations, action histograms, and
reward-modified generalization tasks."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.stats

from . import data as D
from . import envs as E
from . import training as T
from .autodiff import no_grad
from .envs import POINTMASS_STEP_SIZE
from .model import DiagGaussian

log = logging.getLogger("pdt.analysis")


@dataclass
class DiversityReport:
    diversity: float
    k: int
    n_episodes: int


@dataclass
class HistogramDump:
    timestep: int
    n_latents: int
    # per action dimension: {latent id -> sampled action values}
    per_dim: list


def _pairwise_kl_mean(dist):
    """Average KL over ordered pairs i != j of k diagonal Gaussians.

    dist mean/log_std arrays have shape (k, action_dim).
    """
    mu = dist.mean.data
    ls = dist.log_std.data
    k = mu.shape[0]
    if k < 2:
        raise ValueError("diversity needs k >= 2 latent samples")
    var = np.exp(2.0 * ls)
    total = 0.0
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            per_dim = 0.5 * ((var[i] + (mu[i] - mu[j]) ** 2) / var[j] - 1.0) + (ls[j] - ls[i])
            total += float(per_dim.sum())
    return total / (k * (k - 1))


def _candidate_action_dists(state, s_hist, a_hist, cond_hist, zs):
    """Policy pre-squash Gaussians for each candidate current-step latent."""
    k = zs.shape[0]
    t = len(s_hist)
    states = np.broadcast_to(np.stack(s_hist), (k, t, s_hist[0].shape[0])).copy()
    actions = np.broadcast_to(np.stack(a_hist), (k, t, a_hist[0].shape[0])).copy()
    cond = np.broadcast_to(np.stack(cond_hist), (k, t, cond_hist[0].shape[0])).copy()
    cond[:, -1, :] = zs
    with no_grad():
        pol = state.model.policy_forward(states, actions, cond, drop_last_action=True)
    return DiagGaussian(pol.dist.mean[:, t - 1], pol.dist.log_std[:, t - 1])


def behavior_diversity(state, env=None, k=10, n_episodes=10):
    """Average pairwise KL between action distributions induced by k prior
    latents, averaged over every timestep of n_episodes episodes."""
    if k < 2:
        raise ValueError("diversity needs k >= 2")
    env = env or state.env
    model = state.model
    rng = state.rng
    k_eval = state.cfg.model.eval_context_len
    values = []
    for _ in range(n_episodes):
        s = env.init_state_fn(rng)
        s_hist, a_hist, cond_hist = [], [], []
        for t in range(env.horizon):
            s32 = np.asarray(s, np.float32)
            with no_grad():
                prior = model.prior_forward(s32[None, :])
            mu, std = prior.mean.data[0], prior.std[0]
            zs = mu + std * rng.standard_normal((k, model.cfg.d_z)).astype(np.float32)
            s_hist.append(s32)
            cond_hist.append(zs[0])
            a_hist.append(np.zeros(model.cfg.action_dim, np.float32))
            if len(s_hist) > k_eval:
                s_hist.pop(0), a_hist.pop(0), cond_hist.pop(0)
            dists = _candidate_action_dists(state, s_hist, a_hist, cond_hist, zs)
            values.append(_pairwise_kl_mean(dists))
            a = T._policy_act(state, cond_hist, s_hist, a_hist, explore=True)
            a_hist[-1] = a.astype(np.float32)
            s, _ = E.env_step(env, s, a, rng)
    return DiversityReport(float(np.mean(values)), k, n_episodes)


def action_histogram_dump(state, timestep, n_latents=3, n_samples=200, env=None):
    """Sampled actions per latent at a fixed timestep of a rollout (Fig. 4 style)."""
    env = env or state.env
    model = state.model
    rng = state.rng
    k_eval = state.cfg.model.eval_context_len

    s = env.init_state_fn(rng)
    s_hist, a_hist, cond_hist = [], [], []
    for t in range(timestep + 1):
        s32 = np.asarray(s, np.float32)
        z = T._prior_sample(state, s32)
        s_hist.append(s32)
        cond_hist.append(z)
        a_hist.append(np.zeros(model.cfg.action_dim, np.float32))
        if len(s_hist) > k_eval:
            s_hist.pop(0), a_hist.pop(0), cond_hist.pop(0)
        if t == timestep:
            break
        a = T._policy_act(state, cond_hist, s_hist, a_hist, explore=True)
        a_hist[-1] = a.astype(np.float32)
        s, _ = E.env_step(env, s, a, rng)

    with no_grad():
        prior = model.prior_forward(np.asarray(s, np.float32)[None, :])
    mu, std = prior.mean.data[0], prior.std[0]
    zs = mu + std * rng.standard_normal((n_latents, model.cfg.d_z)).astype(np.float32)
    dists = _candidate_action_dists(state, s_hist, a_hist, cond_hist, zs)
    per_dim = [dict() for _ in range(model.cfg.action_dim)]
    for latent_id in range(n_latents):
        m = dists.mean.data[latent_id]
        sd = np.exp(dists.log_std.data[latent_id])
        draws = np.tanh(m + sd * rng.standard_normal((n_samples, model.cfg.action_dim)))
        for d in range(model.cfg.action_dim):
            per_dim[d][latent_id] = draws[:, d].tolist()
    return HistogramDump(timestep, n_latents, per_dim)


def latent_separation(dump):
    """Max over action dims of between-latent mean spread / within-latent std."""
    best = 0.0
    for dim_data in dump.per_dim:
        means = np.array([np.mean(v) for v in dim_data.values()])
        stds = np.array([np.std(v) for v in dim_data.values()])
        spread = means.max() - means.min()
        within = max(float(stds.mean()), 1e-8)
        best = max(best, spread / within)
    return best


def percentile_study(state, percentiles, n_episodes=30, env=None, stats=None):
    """Mean normalized score and 95% CI per controllable-sampling percentile."""
    env = env or state.env
    stats = stats or state.stats
    rows = []
    for x in percentiles:
        scores = []
        for _ in range(n_episodes):
            traj = T.rollout(state, mode="controllable", percentile=x, env=env,
                             explore=False)
            scores.append(D.normalized_score(traj.episodic_return, stats))
        scores = np.array(scores)
        half = None
        if n_episodes > 1:
            sd = scores.std(ddof=1)
            half = float(scipy.stats.t.ppf(0.975, n_episodes - 1) * sd / np.sqrt(n_episodes))
        rows.append({"percentile": float(x), "mean_score": float(scores.mean()),
                     "ci95": half, "scores": scores.tolist()})
    return rows


def percentile_spearman(rows):
    """Spearman correlation between percentile and per-episode score."""
    xs, ys = [], []
    for row in rows:
        xs.extend([row["percentile"]] * len(row["scores"]))
        ys.extend(row["scores"])
    res = scipy.stats.spearmanr(xs, ys)
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# ablations


def heldout_action_nll(state, trajectories, masked, n_batches=20, batch_size=32):
    """Mean held-out BC negative log-likelihood, with the future latent either
    consumed or masked out of the policy input."""
    from .model import squashed_action_nll

    cfg = state.cfg
    sampler = T.TrajectorySampler(trajectories, cfg.model.context_len)
    probs = T.length_weights([len(t) for t in sampler.trajectories])
    model = state.model
    values = []
    for _ in range(n_batches):
        batch = sampler.sample_batch(state.rng, batch_size, probs)
        b, k = batch["states"].shape[:2]
        eps = np.zeros((b, k, model.cfg.d_z), np.float32)  # mean latent at eval
        with no_grad():
            latents = model.encode_future(batch["future_states"], batch["future_actions"],
                                          batch["future_mask"], eps)
            cond = model.conditioning_tokens(latents, k)
            pol = model.policy_forward(batch["states"], batch["actions"], cond,
                                       mask_conditioning=masked)
            nll = squashed_action_nll(pol.dist, batch["actions"])
        values.append(float(nll.data.mean()))
    return float(np.mean(values))


def future_mask_ablation(dataset, cfg, metrics=None):
    """Train twin models (same seed), one with the future masked during
    pretraining, and report held-out action NLL for each."""
    rng = np.random.default_rng(cfg.seed)
    idx = rng.permutation(len(dataset.trajectories))
    cut = max(1, int(0.9 * len(idx)))
    train = [dataset.trajectories[i] for i in idx[:cut]]
    held = [dataset.trajectories[i] for i in idx[cut:]]
    train_ds = dataclasses.replace(dataset, trajectories=train)

    results = {}
    for masked in (False, True):
        state = T.build_state(cfg, dataset.stats)
        _pretrain_masked(state, train_ds, cfg, masked)
        results["masked" if masked else "unmasked"] = heldout_action_nll(
            state, held, masked=masked)
    return results


def _pretrain_masked(state, dataset, cfg, masked):
    """Algorithm-1 pretraining with optional future-token masking."""
    from .autodiff import Tape, backward

    dataset = dataset.reward_free() if dataset.reward_labeled else dataset
    sampler = T.TrajectorySampler(dataset.trajectories, cfg.model.context_len)
    probs = T.length_weights([len(t) for t in sampler.trajectories])
    model = state.model
    for _ in range(cfg.pretrain.iterations):
        batch = sampler.sample_batch(state.rng, cfg.optim.batch_size, probs)
        b, k = batch["states"].shape[:2]
        eps = state.rng.standard_normal((b, k, model.cfg.d_z)).astype(np.float32)
        with Tape():
            latents = model.encode_future(batch["future_states"], batch["future_actions"],
                                          batch["future_mask"], eps, state.rng, True)
            cond = model.conditioning_tokens(latents, k)
            pol = model.policy_forward(batch["states"], batch["actions"], cond,
                                       state.rng, True, mask_conditioning=masked)
            loss_bc, ent = model.loss_bc(pol, batch["actions"])
            loss_fut, _, _ = model.loss_future(latents, batch["states"], cfg.pretrain.beta)
            losses = {"total": loss_bc + loss_fut, "entropy": float(ent.data.mean())}
            T._apply_update(state, losses)
        state.pretrain_steps += 1
    return state


def frozen_finetune_ablation(pretrained_ckpt_path, total_transitions=None):
    """Twin finetune runs from one pretrained checkpoint: full updates vs
    return-predictor-only. Returns both states and their eval curves."""
    from . import checkpoint as CK
    from .metrics import MetricsWriter

    out = {}
    for frozen in (False, True):
        state = CK.load_checkpoint(pretrained_ckpt_path)
        if total_transitions is not None:
            state.cfg.finetune.total_transitions = total_transitions
        writer = MetricsWriter(seed=state.cfg.seed)
        T.finetune(state, metrics=writer, frozen_except_return=frozen)
        curve = [(r.step, r.value) for r in writer.records
                 if r.phase == "eval" and r.tag == "normalized_score"]
        out["frozen" if frozen else "full"] = {"state": state, "curve": curve}
    return out


# ---------------------------------------------------------------------------
# generalization tasks


GENERALIZATION_VARIANTS = ("forward_jump", "jump")


def generalization_task(base_env, variant):
    """Reward-modified pointmass task; coefficients follow the halfcheetah
    jump-task pattern with height mapped to the y coordinate."""
    if base_env.id != "pointmass2d":
        raise ValueError("generalization variants are defined for pointmass2d")
    if variant not in GENERALIZATION_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {GENERALIZATION_VARIANTS}")

    def reward(s, a, ns):
        r = -0.1 * float(np.dot(a, a)) + 15.0 * float(ns[1])
        if variant == "forward_jump":
            r += float(ns[0] - s[0]) / POINTMASS_STEP_SIZE
        return r

    env = dataclasses.replace(base_env, reward_fn=reward, id=f"pointmass2d-{variant}")
    return env


def generalization_stats(env, n_episodes=300, seed=D.REFERENCE_SEED):
    """Normalization stats for a variant using a variant-specific scripted expert."""
    direction = np.array([1.0, 1.0]) if "forward" in env.id else np.array([0.0, 1.0])

    def expert(state, rng):
        return np.clip(direction, -1.0, 1.0)

    random_score = E.monte_carlo_return(env, E.random_controller(env), n_episodes, seed)
    best_score = E.monte_carlo_return(env, expert, n_episodes, seed + 1)
    return D.NormalizationStats(random_score, best_score)


# ---------------------------------------------------------------------------
# JSON output


def write_json(obj, path):
    def default(o):
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return dataclasses.asdict(o)
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"cannot serialize {type(o)}")

    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
