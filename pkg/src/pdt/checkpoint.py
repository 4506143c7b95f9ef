"""Checkpoint format: JSON manifest + concatenated little-endian float32 payload.

Layout: 8-byte magic, 8-byte little-endian manifest length, manifest JSON
(UTF-8), raw payload. The manifest lists every array's name/shape in payload
order and carries counters, RNG state, and the config snapshot. A SHA-256
of the payload in the manifest guards against truncation/corruption.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import config as C
from . import data as D
from . import envs as E
from . import training as T
from .optim import Optimizer

MAGIC = b"PDTCKPT1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _collect_arrays(state):
    """All float arrays, in a deterministic manifest order."""
    arrays = []
    for name, p in state.model.named_params():
        arrays.append((f"param/{name}", p.data))
    for name, arr in state.main_opt.state_arrays():
        arrays.append((f"opt/main/{name}", arr))
    for name, arr in state.alpha_opt.state_arrays():
        arrays.append((f"opt/alpha/{name}", arr))
    if state.warmup_opt is not None:
        for name, arr in state.warmup_opt.state_arrays():
            arrays.append((f"opt/warmup/{name}", arr))
    for i, traj in enumerate(state.buffer.trajectories):
        arrays.append((f"buffer/{i}/states", traj.states))
        arrays.append((f"buffer/{i}/actions", traj.actions))
        arrays.append((f"buffer/{i}/rewards", traj.rewards))
    return arrays


def save_checkpoint(state, path):
    arrays = _collect_arrays(state)
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "<f4",
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "config": C.to_flat(state.cfg),
        "conditioning": state.model.cfg.conditioning,
        "counters": {
            "pretrain_steps": state.pretrain_steps,
            "finetune_steps": state.finetune_steps,
            "env_transitions": state.env_transitions,
            "episodes_collected": state.episodes_collected,
            "warmup_done": state.warmup_done,
            "main_opt_steps": state.main_opt.step_count,
            "alpha_opt_steps": state.alpha_opt.step_count,
            "warmup_opt_steps": state.warmup_opt.step_count if state.warmup_opt else 0,
            "buffer_size": len(state.buffer),
        },
        "rng_state": state.rng.bit_generator.state,
        "rtg_norm": [state.rtg_mu, state.rtg_sigma],
        "stats": {"random_score": state.stats.random_score,
                  "best_score": state.stats.best_score},
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_manifest(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file (magic {magic!r})")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format {manifest.get('format_version')} unsupported; "
            f"this build reads version {FORMAT_VERSION}")
    return manifest


def load_checkpoint(path):
    """Rebuild a TrainState; raises on hash mismatch before touching state."""
    manifest = read_manifest(path)
    with open(path, "rb") as fh:
        fh.seek(8)
        (mlen,) = struct.unpack("<Q", fh.read(8))
        fh.seek(8 + 8 + mlen)
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise CheckpointError("payload hash mismatch: checkpoint corrupted or truncated")

    views = {}
    offset = 0
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        views[entry["name"]] = arr.reshape(shape).astype(np.float32)
        offset += count * 4

    cfg = C.from_flat(dict(manifest["config"]))
    stats = D.NormalizationStats(**manifest["stats"])
    state = T.build_state(cfg, stats, conditioning=manifest["conditioning"])

    for name, p in state.model.named_params():
        key = f"param/{name}"
        if key not in views or views[key].shape != p.data.shape:
            raise CheckpointError(f"parameter {name} missing or shape-mismatched")
        p.data = views[key].copy()

    counters = manifest["counters"]

    def load_opt(opt, prefix, steps):
        pairs = []
        for key, arr in views.items():
            if key.startswith(prefix):
                pairs.append((key[len(prefix):], arr))
        opt.load_state_arrays(pairs, steps)

    load_opt(state.main_opt, "opt/main/", counters["main_opt_steps"])
    load_opt(state.alpha_opt, "opt/alpha/", counters["alpha_opt_steps"])
    if any(k.startswith("opt/warmup/") for k in views):
        f_params = [p for n, p in state.model.main_named_params()
                    if n.startswith("return_net")]
        state.warmup_opt = Optimizer(f_params, lr=cfg.optim.lr,
                                     weight_decay=cfg.optim.weight_decay,
                                     mode=cfg.optim.optimizer)
        load_opt(state.warmup_opt, "opt/warmup/", counters["warmup_opt_steps"])

    for i in range(counters["buffer_size"]):
        traj = D.Trajectory(views[f"buffer/{i}/states"],
                            views[f"buffer/{i}/actions"],
                            views[f"buffer/{i}/rewards"])
        state.buffer.insert(traj)

    state.pretrain_steps = counters["pretrain_steps"]
    state.finetune_steps = counters["finetune_steps"]
    state.env_transitions = counters["env_transitions"]
    state.episodes_collected = counters["episodes_collected"]
    state.warmup_done = counters["warmup_done"]
    state.rtg_mu, state.rtg_sigma = manifest["rtg_norm"]
    state.rng.bit_generator.state = manifest["rng_state"]
    return state
