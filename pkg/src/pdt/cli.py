"""Command-line entry point.

Subcommands: gen-data, pretrain, finetune, evaluate, analyze, baseline,
inspect. Exit codes: 0 success, 2 configuration error, 1 runtime failure.
Set PDT_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import analysis as A
from . import checkpoint as CK
from . import config as C
from . import data as D
from . import envs as E
from . import training as T
from .metrics import MetricsWriter
from .optim import ConfigError

log = logging.getLogger("pdt.cli")


def _setup_logging():
    level = getattr(logging, os.environ.get("PDT_LOG", "info").upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _build_parser():
    p = argparse.ArgumentParser(prog="pdt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=False, ckpt=False, out=True):
        sp.add_argument("--config", help="JSON config file (flat dotted keys)")
        sp.add_argument("--preset", default=None, choices=["desk", "paper"])
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. --set pretrain.iterations=200")
        sp.add_argument("--dry-run", action="store_true",
                        help="resolve and echo the config, then exit")
        if out:
            sp.add_argument("--out", required=False, help="output directory")
        if dataset:
            sp.add_argument("--dataset", help="dataset JSONL path")
        if ckpt:
            sp.add_argument("--ckpt", help="checkpoint path")

    sp = sub.add_parser("gen-data", help="generate an offline dataset")
    common(sp)
    sp.add_argument("--profile", default=None, choices=list(D.PROFILES) + ["multimodal"])
    sp.add_argument("--n", type=int, default=None, help="number of trajectories")

    sp = sub.add_parser("pretrain", help="reward-free future-conditioned pretraining")
    common(sp, dataset=True)
    sp.add_argument("--beta-pretrain", type=float, default=None)

    sp = sub.add_parser("finetune", help="online finetuning from a checkpoint")
    common(sp, ckpt=True)
    sp.add_argument("--transitions", type=int, default=None,
                    help="override finetune.total_transitions")
    sp.add_argument("--beta-finetune", type=float, default=None)
    sp.add_argument("--frozen-except-return", action="store_true",
                    help="update only the return predictor during finetuning")

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(sp, ckpt=True)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--percentile", type=float, default=100.0)

    sp = sub.add_parser("analyze", help="run an analysis")
    sp.add_argument("kind", choices=["diversity", "percentiles", "histogram",
                                     "mask-ablation", "frozen-ablation", "generalization"])
    common(sp, dataset=True, ckpt=True)
    sp.add_argument("--percentiles", default="0,50,100",
                    help="comma-separated percentile list")
    sp.add_argument("--variant", default="forward_jump",
                    choices=list(A.GENERALIZATION_VARIANTS))
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--transitions", type=int, default=None)
    sp.add_argument("--timestep", type=int, default=10)

    sp = sub.add_parser("baseline", help="pretrain a return-conditioned baseline")
    sp.add_argument("which", choices=["odt", "rewardless-dt"])
    common(sp, dataset=True)

    sp = sub.add_parser("inspect", help="print a checkpoint manifest")
    sp.add_argument("--ckpt", required=True)
    return p


def _resolve_config(args, base=None):
    if base is not None:
        cfg = base
    elif getattr(args, "config", None):
        cfg = C.load_config(args.config)
    else:
        cfg = C.make_config(preset=args.preset or "desk")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        C._apply_flat(cfg, {key: value})
    return cfg.validate()


def _outdir(args):
    out = getattr(args, "out", None)
    if not out:
        raise ConfigError("--out is required for this command")
    os.makedirs(out, exist_ok=True)
    return out


def _echo_config(cfg, out=None):
    flat = C.to_flat(cfg)
    print(json.dumps(flat, indent=2, sort_keys=True))
    if out:
        C.save_config(cfg, os.path.join(out, "resolved_config.json"))


def _load_dataset(args):
    if not getattr(args, "dataset", None):
        raise ConfigError("--dataset is required for this command")
    return D.load_dataset(args.dataset)


def _load_state(args):
    if not getattr(args, "ckpt", None):
        raise ConfigError("--ckpt is required for this command")
    return CK.load_checkpoint(args.ckpt)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args):
    cfg = _resolve_config(args)
    if args.profile:
        cfg.profile = args.profile
    if args.n:
        cfg.n_trajectories = args.n
    if args.dry_run:
        _echo_config(cfg)
        return 0
    out = _outdir(args)
    _echo_config(cfg, out)
    env = E.make_env(cfg.env_id)
    if cfg.profile == "multimodal":
        dataset = D.multimodal_dataset(env, cfg.n_trajectories, cfg.dataset_seed)
    else:
        dataset = D.generate_dataset(env, cfg.profile, cfg.n_trajectories, cfg.dataset_seed)
    path = os.path.join(out, "dataset.jsonl")
    D.save_dataset(dataset, path)
    rets = dataset.returns
    log.info("wrote %d trajectories to %s (return range %.1f .. %.1f)",
             len(dataset.trajectories), path, rets.min(), rets.max())
    return 0


def _run_pretrain(args, conditioning, mask_conditioning=False):
    cfg = _resolve_config(args)
    if getattr(args, "beta_pretrain", None) is not None:
        cfg.pretrain.beta = args.beta_pretrain
    if args.dry_run:
        _echo_config(cfg)
        return 0
    out = _outdir(args)
    _echo_config(cfg, out)
    dataset = _load_dataset(args)
    with MetricsWriter(os.path.join(out, "metrics.jsonl"), seed=cfg.seed) as metrics:
        state = T.pretrain(dataset, cfg, metrics=metrics, conditioning=conditioning,
                           mask_conditioning=mask_conditioning)
    path = os.path.join(out, "checkpoint.ckpt")
    CK.save_checkpoint(state, path)
    log.info("pretraining done: %d steps, checkpoint at %s", state.pretrain_steps, path)
    return 0


def cmd_pretrain(args):
    return _run_pretrain(args, conditioning="future")


def cmd_baseline(args):
    mask = args.which == "rewardless-dt"
    return _run_pretrain(args, conditioning="return", mask_conditioning=mask)


def cmd_finetune(args):
    state = _load_state(args)
    cfg = _resolve_config(args, base=state.cfg)
    if args.transitions is not None:
        cfg.finetune.total_transitions = args.transitions
    if getattr(args, "beta_finetune", None) is not None:
        cfg.finetune.beta = args.beta_finetune
    if args.dry_run:
        _echo_config(cfg)
        return 0
    out = _outdir(args)
    _echo_config(cfg, out)
    with MetricsWriter(os.path.join(out, "metrics.jsonl"), seed=cfg.seed) as metrics:
        T.finetune(state, metrics=metrics,
                   frozen_except_return=args.frozen_except_return)
    path = os.path.join(out, "checkpoint.ckpt")
    CK.save_checkpoint(state, path)
    log.info("finetuning done: %d transitions, checkpoint at %s",
             state.env_transitions, path)
    return 0


def cmd_evaluate(args):
    state = _load_state(args)
    if args.seed is not None:
        state.rng = np.random.default_rng(args.seed)
    n = args.episodes or state.cfg.finetune.eval_episodes
    mode = "controllable" if state.model.cfg.conditioning == "future" else "odt"
    if mode == "controllable":
        mean, half = T.evaluate(state, n_episodes=n)
    else:
        mean, half = T.evaluate(state, n_episodes=n, mode="odt")
    result = {"normalized_score": mean, "ci95": half, "episodes": n, "mode": mode}
    print(json.dumps(result, indent=2, sort_keys=True))
    if getattr(args, "out", None):
        out = _outdir(args)
        A.write_json(result, os.path.join(out, "eval.json"))
    return 0


def cmd_analyze(args):
    out = _outdir(args)
    kind = args.kind
    if kind == "diversity":
        state = _load_state(args)
        report = A.behavior_diversity(state, n_episodes=args.episodes or 10)
        A.write_json(report, os.path.join(out, "diversity.json"))
        print(f"diversity {report.diversity:.4f} (k={report.k})")
    elif kind == "percentiles":
        state = _load_state(args)
        percentiles = [float(x) for x in args.percentiles.split(",")]
        rows = A.percentile_study(state, percentiles, n_episodes=args.episodes or 30)
        rho, pval = A.percentile_spearman(rows)
        payload = {"rows": rows, "spearman_rho": rho, "spearman_p": pval}
        A.write_json(payload, os.path.join(out, "percentiles.json"))
        for row in rows:
            print(f"percentile {row['percentile']:5.1f}: {row['mean_score']:7.2f}")
        print(f"spearman rho={rho:.3f} p={pval:.2e}")
    elif kind == "histogram":
        state = _load_state(args)
        dump = A.action_histogram_dump(state, args.timestep)
        A.write_json(dump, os.path.join(out, "histogram.json"))
        print(f"separation {A.latent_separation(dump):.3f}")
    elif kind == "mask-ablation":
        dataset = _load_dataset(args)
        cfg = _resolve_config(args)
        results = A.future_mask_ablation(dataset, cfg)
        A.write_json(results, os.path.join(out, "mask_ablation.json"))
        print(json.dumps(results, indent=2, sort_keys=True))
    elif kind == "frozen-ablation":
        if not getattr(args, "ckpt", None):
            raise ConfigError("--ckpt is required for frozen-ablation")
        results = A.frozen_finetune_ablation(args.ckpt, total_transitions=args.transitions)
        payload = {k: {"curve": v["curve"]} for k, v in results.items()}
        A.write_json(payload, os.path.join(out, "frozen_ablation.json"))
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif kind == "generalization":
        state = _load_state(args)
        env = A.generalization_task(state.env, args.variant)
        stats = A.generalization_stats(env)
        mean, half = T.evaluate(state, n_episodes=args.episodes or 20, env=env, stats=stats)
        result = {"variant": args.variant, "normalized_score": mean, "ci95": half}
        A.write_json(result, os.path.join(out, "generalization.json"))
        print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_inspect(args):
    manifest = CK.read_manifest(args.ckpt)
    slim = dict(manifest)
    slim["arrays"] = f"{len(manifest['arrays'])} arrays"
    slim.pop("rng_state", None)
    print(json.dumps(slim, indent=2, sort_keys=True))
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "baseline": cmd_baseline,
    "inspect": cmd_inspect,
}


def main(argv=None):
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
