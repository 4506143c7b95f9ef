"""Causal GPT-style transformer and trajectory tokenization.

No positional embedding is used anywhere; tokens are distinguished only by
their content and a learned per-modality offset. Attention is causally
masked, so the output at a position depends only on earlier tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Dropout, LayerNorm, Linear, Module, param

NEG_INF = -1e9


@dataclass
class TransformerConfig:
    n_layers: int = 2
    n_heads: int = 2
    embed_dim: int = 64
    dropout_rate: float = 0.1
    context_len: int = 10

    def __post_init__(self):
        if self.embed_dim % self.n_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}"
            )
        for field in ("n_layers", "n_heads", "embed_dim", "context_len"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class TokenStream:
    """Interleaved per-position embeddings plus validity mask."""

    emb: Tensor  # (B, T, E)
    mask: np.ndarray  # (B, T) bool, True = real token
    tokens_per_step: int

    @property
    def length(self):
        return self.emb.shape[1]


class SelfAttention(Module):
    def __init__(self, cfg, rng):
        e = cfg.embed_dim
        self.n_heads = cfg.n_heads
        self.head_dim = e // cfg.n_heads
        self.qkv = Linear(e, 3 * e, rng)
        self.proj = Linear(e, e, rng)
        self.drop = Dropout(cfg.dropout_rate)

    def __call__(self, x, mask_bias, rng=None, training=False):
        b, t, e = x.shape
        h, hd = self.n_heads, self.head_dim
        qkv = self.qkv(x)
        qkv = ad.reshape(qkv, (b, t, 3, h, hd))
        qkv = ad.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B, H, T, hd)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(hd))
        scores = scores + Tensor(mask_bias)
        attn = ad.softmax_lastdim(scores)
        attn = self.drop(attn, rng, training)
        out = ad.matmul(attn, v)  # (B, H, T, hd)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, t, e))
        return self.drop(self.proj(out), rng, training)


class Block(Module):
    """Pre-LayerNorm transformer block with a ReLU MLP."""

    def __init__(self, cfg, rng):
        e = cfg.embed_dim
        self.ln1 = LayerNorm(e)
        self.attn = SelfAttention(cfg, rng)
        self.ln2 = LayerNorm(e)
        self.fc1 = Linear(e, 4 * e, rng)
        self.fc2 = Linear(4 * e, e, rng)
        self.drop = Dropout(cfg.dropout_rate)

    def __call__(self, x, mask_bias, rng=None, training=False):
        x = x + self.attn(self.ln1(x), mask_bias, rng, training)
        h = ad.relu(self.fc1(self.ln2(x)))
        x = x + self.drop(self.fc2(h), rng, training)
        return x


class CausalTransformer(Module):
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.blocks = [Block(cfg, rng) for _ in range(cfg.n_layers)]
        self.ln_out = LayerNorm(cfg.embed_dim)
        self.drop = Dropout(cfg.dropout_rate)

    def max_stream_len(self, tokens_per_step):
        return tokens_per_step * self.cfg.context_len

    def __call__(self, stream: TokenStream, rng=None, training=False):
        b, t, _ = stream.emb.shape
        if t > self.max_stream_len(stream.tokens_per_step):
            raise ValueError(
                f"stream length {t} exceeds context capacity "
                f"{self.max_stream_len(stream.tokens_per_step)}; window the input"
            )
        bias = attention_bias(stream.mask)
        x = self.drop(stream.emb, rng, training)
        for block in self.blocks:
            x = block(x, bias, rng, training)
        return self.ln_out(x)


def attention_bias(mask):
    """Combine causal and key-padding masks into an additive bias (B,1,T,T)."""
    b, t = mask.shape
    causal = np.tril(np.ones((t, t), dtype=bool))
    allowed = causal[None, :, :] & mask[:, None, :]
    # Every query may always attend to itself so no row is fully masked.
    idx = np.arange(t)
    allowed[:, idx, idx] = True
    bias = np.where(allowed, 0.0, NEG_INF).astype(np.float32)
    return bias[:, None, :, :]


class Tokenizer(Module):
    """Embeds trajectory windows into interleaved token streams.

    With a conditioning input the per-step order is (conditioning, state,
    action); without one (the future-encoder view) it is (state, action).
    Each modality has its own linear embedding and learned offset vector.
    """

    def __init__(self, state_dim, action_dim, cond_dim, embed_dim, rng):
        self.state_emb = Linear(state_dim, embed_dim, rng)
        self.action_emb = Linear(action_dim, embed_dim, rng)
        self.cond_emb = Linear(cond_dim, embed_dim, rng) if cond_dim else None
        n_modalities = 3 if cond_dim else 2
        self.modality_offset = param(rng.normal(0.0, 0.02, size=(n_modalities, embed_dim)))
        self.mask_token = param(np.zeros(embed_dim)) if cond_dim else None

    def tokenize(self, states, actions, cond=None, step_mask=None, drop_last_action=False,
                 mask_conditioning=False):
        """Build a TokenStream from aligned (B, K, ·) arrays.

        cond is a Tensor/array of conditioning vectors, or None for the
        two-token (state, action) layout. mask_conditioning replaces every
        conditioning token with the learned mask token.
        K = 0 yields an empty stream (the empty sub-trajectory convention).
        """
        states = ad._as_tensor(states)
        actions = ad._as_tensor(actions)
        b, k = states.shape[0], states.shape[1]
        if actions.shape[1] != k:
            raise ValueError(f"state/action window lengths differ: {k} vs {actions.shape[1]}")
        with_cond = self.cond_emb is not None
        tps = 3 if with_cond else 2
        e = self.modality_offset.shape[1]
        if step_mask is None:
            step_mask = np.ones((b, k), dtype=bool)
        if k == 0:
            return TokenStream(Tensor(np.zeros((b, 0, e), np.float32)),
                               np.zeros((b, 0), bool), tps)

        parts = []
        if with_cond:
            if mask_conditioning:
                c_e = ad.reshape(self.mask_token, (1, 1, e)) + Tensor(np.zeros((b, k, e), np.float32))
            else:
                if cond is None:
                    raise ValueError("conditioning input required for the 3-token layout")
                cond = cond if isinstance(cond, Tensor) else ad._as_tensor(cond)
                if cond.shape[1] != k:
                    raise ValueError(
                        f"conditioning length {cond.shape[1]} does not match window length {k}"
                    )
                c_e = self.cond_emb(cond)
            parts.append(c_e + self.modality_offset[0])
            parts.append(self.state_emb(states) + self.modality_offset[1])
            parts.append(self.action_emb(actions) + self.modality_offset[2])
        else:
            parts.append(self.state_emb(states) + self.modality_offset[0])
            parts.append(self.action_emb(actions) + self.modality_offset[1])

        stacked = ad.concat([ad.reshape(p, (b, k, 1, e)) for p in parts], axis=2)
        emb = ad.reshape(stacked, (b, k * tps, e))
        mask = np.repeat(step_mask[:, :, None], tps, axis=2).reshape(b, k * tps)
        if drop_last_action:
            emb = emb[:, :-1]
            mask = mask[:, :-1]
        return TokenStream(emb, mask, tps)

    def state_positions(self, k, tokens_per_step=3):
        """Indices of state tokens inside an interleaved stream of k steps."""
        offset = 1 if tokens_per_step == 3 else 0
        return np.arange(k) * tokens_per_step + offset
