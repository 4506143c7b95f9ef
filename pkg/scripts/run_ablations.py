#!/usr/bin/env python3
"""Ablation studies: masked-future pretraining (held-out action NLL on
multimodal data), frozen-except-return finetuning, and the latent-diversity
sweep over the regularizer weight beta.

Usage:
    python3 scripts/run_ablations.py --out runs/ablations --seeds 0 1 2
"""

import argparse
import os

from pdt import analysis as A
from pdt import config as C
from pdt import data as D
from pdt import envs as E
from pdt import training as T
from pdt.checkpoint import save_checkpoint


def mid_config(seed, **flat):
    """Desk model with shortened schedules, as used by the acceptance gate's
    comparative criteria."""
    base = {"pretrain.iterations": 800, "n_trajectories": 150, "dataset_seed": seed,
            "finetune.init_transitions": 1500, "finetune.return_warmup_steps": 200,
            "finetune.total_transitions": 12000, "finetune.eval_every": 6000,
            "finetune.future_batch": 128, "finetune.buffer_capacity": 300,
            "seed": seed}
    base.update(flat)
    return C.make_config(**base)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--betas", type=float, nargs="+", default=[1.0, 1e-4])
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    results = {"mask_ablation": [], "frozen_ablation": [], "diversity": []}
    for seed in args.seeds:
        cfg = mid_config(seed, **{"model.context_len": 5, "pretrain.iterations": 4000,
                                  "n_trajectories": 400})
        env = E.make_env(cfg.env_id)
        ds = D.multimodal_dataset(env, cfg.n_trajectories, cfg.dataset_seed)
        res = A.future_mask_ablation(ds, cfg)
        res["seed"] = seed
        results["mask_ablation"].append(res)
        print("mask ablation", res, flush=True)

        cfg = mid_config(seed)
        ds = D.generate_dataset(env, cfg.profile, cfg.n_trajectories, cfg.dataset_seed)
        state = T.pretrain(ds.reward_free(), cfg)
        ckpt = os.path.join(args.out, f"pdt_seed{seed}.ckpt")
        save_checkpoint(state, ckpt)
        frozen = A.frozen_finetune_ablation(ckpt, total_transitions=6000)
        row = {"seed": seed}
        for kind in ("full", "frozen"):
            score, ci = T.evaluate(frozen[kind]["state"], n_episodes=10)
            row[kind] = {"final_score": score, "ci95": ci,
                         "curve": frozen[kind]["curve"]}
        results["frozen_ablation"].append(row)
        print("frozen ablation", {k: row[k]["final_score"] if isinstance(row[k], dict)
                                  else row[k] for k in row}, flush=True)

        for beta in args.betas:
            cfg = mid_config(seed, **{"pretrain.beta": beta})
            state = T.pretrain(ds.reward_free(), cfg)
            div = A.behavior_diversity(state, k=10, n_episodes=5)
            results["diversity"].append({"seed": seed, "beta": beta,
                                         "diversity": div.diversity})
            print(f"diversity seed {seed} beta {beta}: {div.diversity:.4f}", flush=True)

    A.write_json(results, os.path.join(args.out, "ablations.json"))


if __name__ == "__main__":
    main()
