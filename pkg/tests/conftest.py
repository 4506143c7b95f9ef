"""Shared test helpers: finite-difference gradient checking and tiny configs."""

import numpy as np
import pytest

from pdt import autodiff as ad
from pdt import config as C


def fd_check(make_loss, params, h=1e-2, rng=None, max_entries=None):
    """Max relative error between analytic and central-difference gradients.

    make_loss must be a deterministic closure over `params` returning a scalar
    Tensor. Relative error uses max(1, |analytic|, |fd|) as the denominator so
    the check stays meaningful at float32 precision.

    Central differences are only valid where the function is locally smooth;
    probes whose two-scale estimates (step h and h/2) disagree sit on a
    relu/clamp kink and are skipped. Kink-point gradient conventions have
    their own exact tests. At least 70% of probes must be smooth.
    """
    for p in params:
        p.zero_grad()
    with ad.Tape():
        ad.backward(make_loss())

    def fd_at(flat, i, hh):
        orig = flat[i]
        flat[i] = orig + hh
        fp = make_loss().data.item()
        flat[i] = orig - hh
        fm = make_loss().data.item()
        flat[i] = orig
        return (fp - fm) / (2.0 * hh)

    worst = 0.0
    probed = skipped = 0
    for p in params:
        an = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        idxs = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idxs = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idxs:
            probed += 1
            d1 = fd_at(flat, i, h)
            d2 = fd_at(flat, i, h / 2.0)
            scale = max(1.0, abs(d1), abs(d2))
            if abs(d1 - d2) / scale > 1e-3:
                skipped += 1
                continue
            # Richardson extrapolation cancels the quadratic truncation term.
            fd = (4.0 * d2 - d1) / 3.0
            err = abs(float(an_flat[i]) - fd) / max(1.0, abs(float(an_flat[i])), abs(fd))
            worst = max(worst, err)
    assert probed == 0 or skipped <= 0.3 * probed, (
        f"too many kink-contaminated probes ({skipped}/{probed})")
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_config(seed=0, **flat):
    """Seconds-scale config for unit tests."""
    base = {
        "model.n_layers": 1,
        "model.n_heads": 1,
        "model.embed_dim": 16,
        "model.context_len": 4,
        "model.eval_context_len": 3,
        "model.d_z": 2,
        "model.mlp_hidden": 16,
        "model.dropout": 0.0,
        "optim.batch_size": 8,
        "optim.lr_warmup_steps": 5,
        "pretrain.iterations": 5,
        "n_trajectories": 12,
        "finetune.init_transitions": 150,
        "finetune.return_warmup_steps": 5,
        "finetune.total_transitions": 400,
        "finetune.eval_every": 200,
        "finetune.eval_episodes": 2,
        "finetune.future_batch": 16,
        "finetune.buffer_capacity": 20,
        "finetune.updates_per_rollout": 1,
        "seed": seed,
    }
    base.update(flat)
    return C.make_config(**base)
