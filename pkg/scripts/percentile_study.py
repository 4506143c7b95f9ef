#!/usr/bin/env python3
"""Controllable-sampling percentile sweep on a finetuned checkpoint: mean
normalized score per percentile with 95% confidence intervals, plus the
Spearman correlation between percentile and per-episode score.

Usage:
    python3 scripts/percentile_study.py --ckpt runs/main/seed0/checkpoint.ckpt \
        --out runs/percentiles.json
"""

import argparse

from pdt import analysis as A
from pdt.checkpoint import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--percentiles", type=float, nargs="+",
                    default=[0.0, 25.0, 50.0, 75.0, 100.0])
    ap.add_argument("--episodes", type=int, default=30)
    args = ap.parse_args()

    state = load_checkpoint(args.ckpt)
    rows = A.percentile_study(state, args.percentiles, n_episodes=args.episodes)
    rho, pvalue = A.percentile_spearman(rows)
    for row in rows:
        print(f"percentile {row['percentile']:5.1f}: "
              f"{row['mean_score']:.1f} +- {row['ci95']:.1f}")
    print(f"spearman rho {rho:.3f}  p {pvalue:.2e}")
    A.write_json({"rows": rows, "spearman_rho": rho, "spearman_p": pvalue}, args.out)


if __name__ == "__main__":
    main()
