#!/usr/bin/env python3
"""Full pipeline at desk scale: generate data, pretrain, evaluate zero-shot,
finetune online, evaluate again. Repeats over seeds and writes per-seed
metrics plus a summary JSON.

Usage:
    python3 scripts/reproduce_main_result.py --out runs/main --seeds 0 1 2
"""

import argparse
import json
import os
import time

import numpy as np

from pdt import config as C
from pdt import data as D
from pdt import envs as E
from pdt import training as T
from pdt.checkpoint import save_checkpoint
from pdt.metrics import MetricsWriter


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--profile", default="medium-replay")
    ap.add_argument("--eval-episodes", type=int, default=20)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    summary = []
    for seed in args.seeds:
        t0 = time.time()
        cfg = C.make_config(preset=args.preset, seed=seed, dataset_seed=seed,
                            profile=args.profile)
        run_dir = os.path.join(args.out, f"seed{seed}")
        os.makedirs(run_dir, exist_ok=True)
        C.save_config(cfg, os.path.join(run_dir, "resolved_config.json"))

        env = E.make_env(cfg.env_id)
        ds = D.generate_dataset(env, cfg.profile, cfg.n_trajectories, cfg.dataset_seed)
        with MetricsWriter(os.path.join(run_dir, "metrics.jsonl"), seed=seed) as m:
            state = T.pretrain(ds.reward_free(), cfg, metrics=m)
            zero, zero_ci = T.evaluate(state, n_episodes=args.eval_episodes)
            m.log(state.env_transitions, "eval", "zero_shot_score", zero)
            T.finetune(state, metrics=m)
            final, final_ci = T.evaluate(state, n_episodes=args.eval_episodes)
            m.log(state.env_transitions, "eval", "final_score", final)
        save_checkpoint(state, os.path.join(run_dir, "checkpoint.ckpt"))
        row = {"seed": seed, "zero_shot": zero, "zero_shot_ci95": zero_ci,
               "final": final, "final_ci95": final_ci,
               "gain": final - zero, "seconds": round(time.time() - t0, 1)}
        summary.append(row)
        print(json.dumps(row), flush=True)

    agg = {"runs": summary,
           "zero_shot_mean": float(np.mean([r["zero_shot"] for r in summary])),
           "final_mean": float(np.mean([r["final"] for r in summary])),
           "gain_mean": float(np.mean([r["gain"] for r in summary]))}
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(agg, fh, indent=2, sort_keys=True)
    print(json.dumps({k: v for k, v in agg.items() if k != "runs"}))


if __name__ == "__main__":
    main()
