"""Small neural-net layer library on top of the autodiff core."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Base class: parameter discovery via attribute traversal.

    Parameter order is deterministic (attribute insertion order), which
    checkpointing relies on.
    """

    def named_params(self, prefix=""):
        out = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_params(full))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_params(f"{full}.{i}"))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{full}.{i}", item))
        return out

    def params(self):
        return [p for _, p in self.named_params()]


def param(data):
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, init_scale=0.02, zero_init=False):
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            w = rng.normal(0.0, init_scale, size=(in_dim, out_dim))
        self.weight = param(w)
        self.bias = param(np.zeros(out_dim))

    def __call__(self, x):
        # Fold leading dims into one gemm; much faster than batched matmul.
        if len(x.shape) > 2:
            lead = x.shape[:-1]
            flat = ad.reshape(x, (-1, x.shape[-1]))
            out = ad.matmul(flat, self.weight) + self.bias
            return ad.reshape(out, lead + (self.weight.shape[1],))
        return ad.matmul(x, self.weight) + self.bias


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gain = param(np.ones(dim))
        self.bias = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        return ad.layer_norm(x, self.eps) * self.gain + self.bias


class MLP(Module):
    """Fully connected net with ReLU hidden activations."""

    def __init__(self, dims, rng, zero_init_last=False):
        self.layers = [
            Linear(dims[i], dims[i + 1], rng, zero_init=(zero_init_last and i == len(dims) - 2))
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x


class Dropout:
    """Inverted dropout; the mask is drawn from the caller's RNG stream."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def __call__(self, x, rng=None, training=False):
        if not training or self.rate == 0.0 or rng is None:
            return x
        keep = 1.0 - self.rate
        draws = rng.random(x.shape, dtype=np.float32)
        mask = (draws < keep).astype(np.float32) / np.float32(keep)
        return x * Tensor(mask)
