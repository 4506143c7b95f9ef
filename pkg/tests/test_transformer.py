"""Causality, masking, and tokenization tests for the transformer."""

import numpy as np
import pytest

from pdt import autodiff as ad
from pdt.autodiff import Tensor
from pdt.transformer import (NEG_INF, CausalTransformer, TokenStream, Tokenizer,
                             TransformerConfig, attention_bias)


def make_tf(rng, **kw):
    kw = {"n_layers": 2, "n_heads": 2, "embed_dim": 16, "dropout_rate": 0.0,
          "context_len": 8, **kw}
    cfg = TransformerConfig(**kw)
    return cfg, CausalTransformer(cfg, rng)


def run(tf, emb, mask=None, tps=1):
    if mask is None:
        mask = np.ones(emb.shape[:2], bool)
    return tf(TokenStream(Tensor(emb), mask, tps)).data


def test_causality_bit_exact(rng):
    _, tf = make_tf(rng)
    emb = rng.normal(size=(2, 6, 16)).astype(np.float32)
    base = run(tf, emb)
    for t in range(1, 6):
        perturbed = emb.copy()
        perturbed[:, t:] += rng.normal(size=perturbed[:, t:].shape).astype(np.float32)
        out = run(tf, perturbed)
        # Outputs strictly before the perturbation are bit-identical.
        assert np.array_equal(out[:, :t], base[:, :t])


def test_prefix_permutation_invariance(rng):
    # No positional embedding: attention at the final position sees earlier
    # tokens only as a content multiset, so permuting them leaves the output
    # unchanged up to float reassociation noise.  This is exact per attention
    # layer; with depth the earlier tokens' own representations depend on
    # *their* prefixes, so the oracle uses a single layer, where any
    # positional leakage would break invariance outright.
    _, tf = make_tf(rng, n_layers=1)
    emb = rng.normal(size=(1, 7, 16)).astype(np.float32)
    base = run(tf, emb)[:, -1]
    for _ in range(5):
        perm = rng.permutation(6)
        shuffled = np.concatenate([emb[:, perm], emb[:, 6:]], axis=1)
        out = run(tf, shuffled)[:, -1]
        assert np.max(np.abs(out - base)) <= 1e-5


def test_padding_mask_blocks_padded_keys(rng):
    _, tf = make_tf(rng)
    emb = rng.normal(size=(1, 6, 16)).astype(np.float32)
    mask = np.array([[True, True, True, True, False, False]])
    base = run(tf, emb, mask)
    junk = emb.copy()
    junk[:, 4:] = rng.normal(size=(1, 2, 16))
    out = run(tf, junk, mask)
    assert np.array_equal(out[:, :4], base[:, :4])


def test_attention_bias_layout():
    mask = np.array([[True, True, False]])
    bias = attention_bias(mask)
    assert bias.shape == (1, 1, 3, 3)
    b = bias[0, 0]
    assert np.all(np.diag(b) == 0.0)  # self-attention always allowed
    assert b[0, 1] == NEG_INF and b[0, 2] == NEG_INF  # causal
    assert b[2, 2] == 0.0 and b[2, 0] == 0.0
    assert b[1, 2] == NEG_INF  # padded key blocked


def test_stream_too_long_raises(rng):
    cfg, tf = make_tf(rng, context_len=2)
    emb = np.zeros((1, 5, 16), np.float32)
    with pytest.raises(ValueError, match="context capacity"):
        run(tf, emb, tps=2)


def test_config_validation():
    with pytest.raises(ValueError):
        TransformerConfig(embed_dim=10, n_heads=3)
    with pytest.raises(ValueError):
        TransformerConfig(n_layers=0)
    with pytest.raises(ValueError):
        TransformerConfig(dropout_rate=1.0)


# ---------------------------------------------------------------------------
# tokenizer


def test_tokenizer_interleaving(rng):
    tok = Tokenizer(state_dim=2, action_dim=2, cond_dim=3, embed_dim=8, rng=rng)
    states = rng.normal(size=(1, 4, 2)).astype(np.float32)
    actions = rng.normal(size=(1, 4, 2)).astype(np.float32)
    cond = rng.normal(size=(1, 4, 3)).astype(np.float32)
    stream = tok.tokenize(states, actions, cond=cond)
    assert stream.length == 12 and stream.tokens_per_step == 3
    # Position 3i+1 holds the state embedding for step i.
    s_emb = tok.state_emb(Tensor(states)).data + tok.modality_offset.data[1]
    for i in range(4):
        assert np.allclose(stream.emb.data[0, 3 * i + 1], s_emb[0, i], atol=1e-6)
    assert np.array_equal(tok.state_positions(4), np.array([1, 4, 7, 10]))


def test_tokenizer_two_token_layout(rng):
    tok = Tokenizer(2, 2, 0, 8, rng)
    stream = tok.tokenize(np.zeros((1, 3, 2)), np.zeros((1, 3, 2)))
    assert stream.length == 6 and stream.tokens_per_step == 2
    assert tok.mask_token is None
    assert np.array_equal(tok.state_positions(3, tokens_per_step=2), np.array([0, 2, 4]))


def test_mask_conditioning_ignores_cond_values(rng):
    tok = Tokenizer(2, 2, 3, 8, rng)
    s, a = np.zeros((1, 3, 2)), np.zeros((1, 3, 2))
    s1 = tok.tokenize(s, a, cond=rng.normal(size=(1, 3, 3)), mask_conditioning=True)
    s2 = tok.tokenize(s, a, cond=rng.normal(size=(1, 3, 3)), mask_conditioning=True)
    assert np.array_equal(s1.emb.data, s2.emb.data)


def test_drop_last_action(rng):
    tok = Tokenizer(2, 2, 3, 8, rng)
    stream = tok.tokenize(np.zeros((1, 3, 2)), np.zeros((1, 3, 2)),
                          cond=np.zeros((1, 3, 3)), drop_last_action=True)
    assert stream.length == 8  # 3*3 - 1


def test_empty_window(rng):
    tok = Tokenizer(2, 2, 3, 8, rng)
    stream = tok.tokenize(np.zeros((1, 0, 2)), np.zeros((1, 0, 2)))
    assert stream.length == 0


def test_tokenize_length_mismatch_raises(rng):
    tok = Tokenizer(2, 2, 3, 8, rng)
    with pytest.raises(ValueError, match="lengths differ"):
        tok.tokenize(np.zeros((1, 3, 2)), np.zeros((1, 2, 2)))
    with pytest.raises(ValueError, match="conditioning"):
        tok.tokenize(np.zeros((1, 3, 2)), np.zeros((1, 3, 2)), cond=np.zeros((1, 2, 3)))
