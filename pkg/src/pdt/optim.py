"""Adam / LAMB optimizers with global-norm gradient clipping.

Weight decay is decoupled from the gradient-based update in both modes.
"""

from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid optimizer or run configuration values."""


def global_grad_norm(params):
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(params, max_norm):
    """Scale all gradients so the global norm is at most `max_norm`."""
    if max_norm <= 0:
        raise ConfigError(f"grad_clip must be positive, got {max_norm}")
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = np.float32(max_norm / norm)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class Optimizer:
    """First/second-moment optimizer over a fixed parameter list.

    mode="adam" applies the bias-corrected Adam update; mode="lamb" additionally
    scales each parameter's update by the trust ratio ||p|| / ||update||.
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, mode="adam"):
        if mode not in ("adam", "lamb"):
            raise ConfigError(f"unknown optimizer mode {mode!r}")
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.mode = mode
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, grad_clip=None, lr_scale=1.0):
        if grad_clip is not None:
            clip_grad_norm(self.params, grad_clip)
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        lr = np.float32(self.lr * lr_scale)
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            update = mhat / (np.sqrt(vhat) + self.eps)
            if self.mode == "lamb":
                if self.weight_decay:
                    update = update + self.weight_decay * p.data
                pnorm = float(np.linalg.norm(p.data.astype(np.float64)))
                unorm = float(np.linalg.norm(update.astype(np.float64)))
                trust = pnorm / unorm if pnorm > 0 and unorm > 0 else 1.0
                p.data -= (lr * np.float32(trust)) * update
            else:
                p.data -= lr * update.astype(np.float32)
                if self.weight_decay:
                    p.data -= lr * np.float32(self.weight_decay) * p.data

    def state_arrays(self):
        """Flat (name, array) view of the moment buffers, in parameter order."""
        out = []
        for i in range(len(self.params)):
            out.append((f"m/{i}", self.m[i]))
            out.append((f"v/{i}", self.v[i]))
        return out

    def load_state_arrays(self, arrays, step_count):
        for name, arr in arrays:
            kind, idx = name.split("/")
            idx = int(idx)
            target = self.m if kind == "m" else self.v
            if target[idx].shape != arr.shape:
                raise ValueError(f"optimizer buffer {name} shape mismatch")
            target[idx] = arr.astype(np.float32).copy()
        self.step_count = step_count
