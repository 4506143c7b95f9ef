#!/usr/bin/env python3
"""Baseline comparison: PDT vs return-conditioned (ODT) and Rewardless-DT
pretraining, on the original task and on the reward-modified generalization
variants.

Usage:
    python3 scripts/run_baselines.py --out runs/baselines --seeds 0 1 2
"""

import argparse
import os

from pdt import analysis as A
from pdt import data as D
from pdt import envs as E
from pdt import training as T
from pdt.checkpoint import load_checkpoint, save_checkpoint

from run_ablations import mid_config


def finetuned_score(ckpt, env=None, stats=None, episodes=10):
    state = load_checkpoint(ckpt)
    if env is not None:
        state.env, state.stats = env, stats
    T.finetune(state)
    score, ci = T.evaluate(state, n_episodes=episodes)
    return {"final_score": score, "ci95": ci}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--variants", nargs="+", default=list(A.GENERALIZATION_VARIANTS))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for seed in args.seeds:
        cfg = mid_config(seed)
        env = E.make_env(cfg.env_id)
        ds = D.generate_dataset(env, cfg.profile, cfg.n_trajectories, cfg.dataset_seed)

        ckpts = {}
        for method, kwargs in (("pdt", {}),
                               ("odt", {"conditioning": "return"}),
                               ("rdt", {"conditioning": "return",
                                        "mask_conditioning": True})):
            data = ds.reward_free() if method == "pdt" else ds
            state = T.pretrain(data, mid_config(seed), **kwargs)
            ckpts[method] = os.path.join(args.out, f"{method}_seed{seed}.ckpt")
            save_checkpoint(state, ckpts[method])

        row = {"seed": seed, "original": {}, "variants": {}}
        for method in ("pdt", "odt", "rdt"):
            row["original"][method] = finetuned_score(ckpts[method])
            print(f"seed {seed} original {method}: {row['original'][method]}", flush=True)
        for variant in args.variants:
            genv = A.generalization_task(env, variant)
            gstats = A.generalization_stats(genv)
            row["variants"][variant] = {}
            for method in ("pdt", "odt"):
                row["variants"][variant][method] = finetuned_score(
                    ckpts[method], env=genv, stats=gstats)
                print(f"seed {seed} {variant} {method}: "
                      f"{row['variants'][variant][method]}", flush=True)
        rows.append(row)

    A.write_json({"runs": rows}, os.path.join(args.out, "baselines.json"))


if __name__ == "__main__":
    main()
