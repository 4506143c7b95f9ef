"""Run configuration: nested dataclasses with a flat dotted-key JSON form.

Two presets exist: "desk" (minutes-scale defaults, the default) and "paper"
(full-scale hyperparameters, retained for fidelity checks).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .optim import ConfigError


@dataclass
class ModelSection:
    n_layers: int = 2
    n_heads: int = 2
    embed_dim: int = 64
    dropout: float = 0.1
    context_len: int = 10  # K at training time
    eval_context_len: int = 5  # K at rollout time
    d_z: int = 8
    latent_mode: str = "sequence"
    mlp_hidden: int = 64


@dataclass
class OptimSection:
    lr: float = 1e-3
    weight_decay: float = 1e-3
    grad_clip: float = 0.25
    batch_size: int = 64
    lr_warmup_steps: int = 100
    alpha_lr: float = 1e-3
    optimizer: str = "adam"  # "adam" | "lamb"


@dataclass
class PretrainSection:
    iterations: int = 1500
    beta: float = 1e-3


@dataclass
class FinetuneSection:
    beta: float = 1e-4
    init_transitions: int = 2000
    return_warmup_steps: int = 300
    updates_per_rollout: int = 2
    total_transitions: int = 50000
    eval_every: int = 2000
    eval_episodes: int = 10
    future_batch: int = 256
    buffer_capacity: int = 500
    percentile: float = 100.0
    resample_latent_every_step: bool = True


@dataclass
class RunConfig:
    env_id: str = "pointmass2d"
    profile: str = "medium-replay"
    seed: int = 0
    preset: str = "desk"
    n_trajectories: int = 200
    dataset_seed: int = 0
    model: ModelSection = field(default_factory=ModelSection)
    optim: OptimSection = field(default_factory=OptimSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)

    def validate(self):
        positive = [
            ("n_trajectories", self.n_trajectories),
            ("model.n_layers", self.model.n_layers),
            ("model.n_heads", self.model.n_heads),
            ("model.embed_dim", self.model.embed_dim),
            ("model.context_len", self.model.context_len),
            ("model.eval_context_len", self.model.eval_context_len),
            ("model.d_z", self.model.d_z),
            ("optim.lr", self.optim.lr),
            ("optim.grad_clip", self.optim.grad_clip),
            ("optim.batch_size", self.optim.batch_size),
            ("finetune.future_batch", self.finetune.future_batch),
            ("finetune.buffer_capacity", self.finetune.buffer_capacity),
            ("finetune.eval_episodes", self.finetune.eval_episodes),
        ]
        for name, value in positive:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name, value in [("pretrain.beta", self.pretrain.beta),
                            ("finetune.beta", self.finetune.beta)]:
            if value < 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")
        if not 0 <= self.finetune.percentile <= 100:
            raise ConfigError("finetune.percentile must be in [0, 100]")
        if self.optim.optimizer not in ("adam", "lamb"):
            raise ConfigError(f"unknown optimizer {self.optim.optimizer!r}")
        return self


PAPER_OVERRIDES = {
    "model.n_layers": 4,
    "model.n_heads": 4,
    "model.embed_dim": 512,
    "model.context_len": 20,
    "model.eval_context_len": 5,
    "model.d_z": 16,
    "optim.lr": 1e-4,
    "optim.weight_decay": 1e-3,
    "optim.grad_clip": 0.25,
    "optim.batch_size": 256,
    "optim.lr_warmup_steps": 10000,
    "optim.optimizer": "lamb",
    "pretrain.iterations": 20000,
    "finetune.init_transitions": 10000,
    "finetune.return_warmup_steps": 1500,
    "finetune.future_batch": 256,
    "finetune.eval_every": 10000,
}


def make_config(preset="desk", **flat_overrides):
    cfg = RunConfig(preset=preset)
    if preset == "paper":
        _apply_flat(cfg, PAPER_OVERRIDES)
    elif preset != "desk":
        raise ConfigError(f"unknown preset {preset!r}")
    _apply_flat(cfg, flat_overrides)
    return cfg.validate()


def to_flat(cfg):
    """Flatten to dotted keys, e.g. {"model.embed_dim": 64, ...}."""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            for sub in dataclasses.fields(value):
                out[f"{f.name}.{sub.name}"] = getattr(value, sub.name)
        else:
            out[f.name] = value
    return out


def _apply_flat(cfg, flat):
    for key, value in flat.items():
        if "." in key:
            section, name = key.split(".", 1)
            target = getattr(cfg, section, None)
            if target is None or not hasattr(target, name):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(target, name, value)
        else:
            if not hasattr(cfg, key) or dataclasses.is_dataclass(getattr(cfg, key)):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)


def from_flat(flat, preset=None):
    preset = preset or flat.get("preset", "desk")
    flat = {k: v for k, v in flat.items() if k != "preset"}
    return make_config(preset=preset, **flat)


def save_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(to_flat(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path):
    with open(path) as fh:
        return from_flat(json.load(fh))
