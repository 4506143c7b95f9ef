"""Learned components and losses: policy, future encoder, future prior,
return predictor, and the entropy temperature.

The policy and the future encoder share the causal-transformer architecture
(separate weights). The prior and return predictor are 2-hidden-layer ReLU
MLPs. Action distributions are tanh-squashed diagonal Gaussians; entropy
terms use the pre-squash closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Linear, MLP, Module, param
from .transformer import CausalTransformer, Tokenizer, TransformerConfig

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)
_ATANH_CLIP = 1.0 - 1e-6


@dataclass
class ModelConfig:
    state_dim: int
    action_dim: int
    transformer: TransformerConfig = field(default_factory=TransformerConfig)
    d_z: int = 8
    latent_mode: str = "sequence"  # "sequence" | "single"
    conditioning: str = "future"  # "future" (PDT) | "return" (ODT / Rewardless-DT)
    mlp_hidden: int = 64
    init_log_alpha: float = -1.0

    @property
    def target_entropy(self):
        return -float(self.action_dim)

    def __post_init__(self):
        if self.latent_mode not in ("sequence", "single"):
            raise ValueError(f"unknown latent_mode {self.latent_mode!r}")
        if self.conditioning not in ("future", "return"):
            raise ValueError(f"unknown conditioning {self.conditioning!r}")


@dataclass
class DiagGaussian:
    """Mean / log-std pair; log_std tensors are clamped on construction."""

    mean: Tensor
    log_std: Tensor

    def detach(self):
        return DiagGaussian(self.mean.detach(), self.log_std.detach())

    @property
    def std(self):
        return np.exp(self.log_std.data)


@dataclass
class LatentSequence:
    dist: DiagGaussian  # per-position Gaussians over z
    sample: Tensor  # reparameterized z, same shape as mean
    mask: np.ndarray  # (B, L) validity


@dataclass
class PolicyOutput:
    dist: DiagGaussian  # pre-squash action Gaussian per state-token position


@dataclass
class ReturnPrediction:
    dist: DiagGaussian  # 1-D Gaussian over normalized return-to-go


# ---------------------------------------------------------------------------
# distribution helpers (closed forms, summed over the last dimension)


def gaussian_entropy(dist):
    """Entropy of a diagonal Gaussian, summed over dimensions: (B, ...)."""
    per_dim = 0.5 * (1.0 + _LOG_2PI) + dist.log_std
    return ad.sum_(per_dim, axis=-1)


def gaussian_nll(dist, x):
    """-log N(x; mean, std), summed over the last dimension. x is constant."""
    x = np.asarray(x, dtype=np.float32)
    diff = Tensor(x) - dist.mean
    inv_var = ad.exp(dist.log_std * -2.0)
    per_dim = 0.5 * (diff * diff * inv_var) + dist.log_std + 0.5 * _LOG_2PI
    return ad.sum_(per_dim, axis=-1)


def kl_to_standard_normal(dist):
    """KL(dist || N(0, I)), summed over the last dimension."""
    var = ad.exp(dist.log_std * 2.0)
    per_dim = 0.5 * (dist.mean * dist.mean + var - 1.0) - dist.log_std
    return ad.sum_(per_dim, axis=-1)


def gaussian_kl(p, q):
    """KL(p || q) for diagonal Gaussians, summed over the last dimension."""
    var_ratio = ad.exp((p.log_std - q.log_std) * 2.0)
    diff = p.mean - q.mean
    scaled_sq = diff * diff * ad.exp(q.log_std * -2.0)
    per_dim = 0.5 * (var_ratio + scaled_sq - 1.0) + (q.log_std - p.log_std)
    return ad.sum_(per_dim, axis=-1)


def squashed_action_nll(dist, actions):
    """-log-prob of tanh-squashed actions under the pre-squash Gaussian.

    Uses the change of variables log pi(a) = log N(u) - sum log(1 - a^2)
    with a = tanh(u); the Jacobian term is constant w.r.t. parameters.
    """
    a = np.clip(np.asarray(actions, dtype=np.float32), -_ATANH_CLIP, _ATANH_CLIP)
    u = np.arctanh(a)
    correction = np.log1p(-(a.astype(np.float64) ** 2)).sum(axis=-1).astype(np.float32)
    return gaussian_nll(dist, u) + Tensor(correction)


def masked_mean(values, mask):
    """Mean of `values` over positions where mask is True."""
    mask = np.asarray(mask, bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("all positions are masked")
    return ad.sum_(values * Tensor(mask.astype(np.float32))) * (1.0 / count)


def _split_gaussian(raw, dim):
    mean = raw[..., :dim]
    log_std = ad.clamp(raw[..., dim:], LOG_STD_MIN, LOG_STD_MAX)
    return DiagGaussian(mean, log_std)


# ---------------------------------------------------------------------------
# the model


class PDTModel(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        tf_cfg = cfg.transformer
        e = tf_cfg.embed_dim
        cond_dim = cfg.d_z if cfg.conditioning == "future" else 1
        self.policy_tokenizer = Tokenizer(cfg.state_dim, cfg.action_dim, cond_dim, e, rng)
        self.policy_tf = CausalTransformer(tf_cfg, rng)
        self.action_head = Linear(e, 2 * cfg.action_dim, rng)
        self.log_alpha = param(np.array(cfg.init_log_alpha))
        if cfg.conditioning == "future":
            self.encoder_tokenizer = Tokenizer(cfg.state_dim, cfg.action_dim, 0, e, rng)
            self.encoder_tf = CausalTransformer(tf_cfg, rng)
            # Zero-init heads start the latent and prior distributions at N(0, I).
            self.latent_head = Linear(e, 2 * cfg.d_z, rng, zero_init=True)
            self.prior_net = MLP(
                [cfg.state_dim, cfg.mlp_hidden, cfg.mlp_hidden, 2 * cfg.d_z], rng,
                zero_init_last=True)
            self.return_net = MLP(
                [cfg.state_dim + cfg.d_z, cfg.mlp_hidden, cfg.mlp_hidden, 2], rng,
                zero_init_last=True)

    # -- parameter groups ---------------------------------------------------

    def main_named_params(self):
        return [(n, p) for n, p in self.named_params() if n != "log_alpha"]

    def main_params(self):
        return [p for _, p in self.main_named_params()]

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha.data))

    # -- components ---------------------------------------------------------

    def encode_future(self, f_states, f_actions, f_mask, eps, rng=None, training=False):
        """Causal encoding of the future window into per-position latents.

        eps supplies the reparameterization noise (pass zeros for the mean).
        """
        f_states = np.asarray(f_states, np.float32)
        b, k = f_states.shape[0], f_states.shape[1]
        if k == 0:
            raise ValueError("cannot encode an empty future window")
        stream = self.encoder_tokenizer.tokenize(f_states, f_actions, step_mask=f_mask)
        h = self.encoder_tf(stream, rng, training)
        # The Gaussian for future step i is read at its action token, so it
        # sees exactly transitions 1..i of the future window.
        pos = 2 * np.arange(k) + 1
        raw = self.latent_head(h[:, pos])
        dist = _split_gaussian(raw, self.cfg.d_z)
        mask = np.asarray(f_mask, bool) if f_mask is not None else np.ones((b, k), bool)
        if self.cfg.latent_mode == "single":
            last = mask.sum(axis=1).astype(int) - 1
            last = np.maximum(last, 0)
            key = (np.arange(b), last)
            dist = DiagGaussian(
                ad.reshape(dist.mean[key], (b, 1, self.cfg.d_z)),
                ad.reshape(dist.log_std[key], (b, 1, self.cfg.d_z)),
            )
            eps = np.asarray(eps, np.float32)[:, :1]
            mask = np.ones((b, 1), bool)
        z = dist.mean + ad.exp(dist.log_std) * Tensor(np.asarray(eps, np.float32))
        return LatentSequence(dist, z, mask)

    def prior_forward(self, states):
        raw = self.prior_net(ad._as_tensor(states))
        return _split_gaussian(raw, self.cfg.d_z)

    def return_forward(self, z, states):
        states = ad._as_tensor(states)
        z = z if isinstance(z, Tensor) else ad._as_tensor(z)
        raw = self.return_net(ad.concat([states, z], axis=-1))
        return ReturnPrediction(_split_gaussian(raw, 1))

    def policy_forward(self, ctx_states, ctx_actions, cond, rng=None, training=False,
                       mask_conditioning=False, drop_last_action=False):
        """Squashed-Gaussian action distribution at every state-token position."""
        stream = self.policy_tokenizer.tokenize(
            ctx_states, ctx_actions, cond=cond,
            drop_last_action=drop_last_action, mask_conditioning=mask_conditioning)
        h = self.policy_tf(stream, rng, training)
        k = np.asarray(ctx_states).shape[1]
        pos = self.policy_tokenizer.state_positions(k)
        raw = self.action_head(h[:, pos])
        return PolicyOutput(_split_gaussian(raw, self.cfg.action_dim))

    def conditioning_tokens(self, latents, k):
        """Expand a LatentSequence into per-context-position conditioning tokens."""
        z = latents.sample
        if self.cfg.latent_mode == "single":
            b = z.shape[0]
            zeros = Tensor(np.zeros((b, k, self.cfg.d_z), np.float32))
            return z + zeros  # broadcast the single latent to every position
        return z

    # -- losses -------------------------------------------------------------

    def loss_bc(self, policy_out, actions, mask=None):
        """Eq.-style BC loss: mean NLL minus alpha times entropy (alpha constant)."""
        if mask is None:
            mask = np.ones(actions.shape[:2], bool)
        nll = squashed_action_nll(policy_out.dist, actions)
        ent = gaussian_entropy(policy_out.dist)
        alpha = np.float32(self.alpha)  # stop-gradient: treated as a constant here
        return masked_mean(nll - alpha * ent, mask), ent

    def loss_future(self, latents, ctx_states, beta):
        """Latent regularization plus prior fitting.

        The first term (weight beta) regularizes the encoder toward N(0, I);
        the second trains the prior against a stop-gradient copy of the
        encoder output, paired with the state at which each latent is consumed.
        """
        if beta < 0:
            raise ValueError(f"beta must be non-negative, got {beta}")
        ctx_states = np.asarray(ctx_states, np.float32)
        if self.cfg.latent_mode == "single":
            prior_states = ctx_states[:, :1]
        else:
            prior_states = ctx_states
        prior = self.prior_forward(prior_states)
        reg = masked_mean(kl_to_standard_normal(latents.dist), latents.mask)
        fit = masked_mean(gaussian_kl(latents.dist.detach(), prior), latents.mask)
        return beta * reg + fit, reg, fit

    def loss_return(self, latents, ctx_states, rtg_norm, mask=None):
        """Gaussian NLL of normalized return-to-go labels; grads reach the encoder."""
        if rtg_norm is None:
            raise ValueError("return loss requires reward-labeled data")
        k = np.asarray(ctx_states).shape[1]
        z = self.conditioning_tokens(latents, k)
        pred = self.return_forward(z, ctx_states)
        labels = np.asarray(rtg_norm, np.float32)[..., None]
        nll = gaussian_nll(pred.dist, labels)
        if mask is None:
            mask = latents.mask if self.cfg.latent_mode == "sequence" else np.ones(nll.shape, bool)
        return masked_mean(nll, mask)


def alpha_loss_grad(model, entropy_value):
    """d/d(log_alpha) of J(alpha) = alpha * (H_measured - H_target)."""
    return model.alpha * (float(entropy_value) - model.cfg.target_entropy)


def alpha_update(model, alpha_opt, entropy_value):
    """One dual gradient step on the temperature; raises alpha when entropy
    falls below target."""
    model.log_alpha.grad = np.array(
        alpha_loss_grad(model, entropy_value), np.float32).reshape(())
    alpha_opt.step()
    model.log_alpha.zero_grad()
