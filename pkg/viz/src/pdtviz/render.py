"""Matplotlib rendering. The numeric truth lives in the sidecar JSON; the
image is a convenience view of it."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _finish(fig, ax, ref_lines, out):
    for value in ref_lines:
        ax.axhline(value, linestyle="--", color="gray", linewidth=1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_curves(curve, ref_lines, out):
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = [p["step"] for p in curve["points"]]
    means = [p["mean"] for p in curve["points"]]
    ax.plot(steps, means, label=curve["tag"])
    if any(p["ci95"] is not None for p in curve["points"]):
        lo = [p["mean"] - (p["ci95"] or 0.0) for p in curve["points"]]
        hi = [p["mean"] + (p["ci95"] or 0.0) for p in curve["points"]]
        ax.fill_between(steps, lo, hi, alpha=0.25)
    ax.set_xlabel("step")
    ax.set_ylabel(curve["tag"])
    ax.legend()
    _finish(fig, ax, ref_lines, out)


def render_hist(series, out):
    dims = sorted({s["action_dim"] for s in series})
    fig, axes = plt.subplots(1, len(dims), figsize=(4 * len(dims), 3.2),
                             squeeze=False)
    for col, dim in enumerate(dims):
        ax = axes[0][col]
        for s in (x for x in series if x["action_dim"] == dim):
            ax.hist(s["values"], bins=30, range=(-1, 1), alpha=0.5,
                    label=f"latent {s['latent']}")
        ax.set_xlabel(f"action dim {dim}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def render_bars(bars, ref_lines, out):
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [b["label"] for b in bars]
    values = [b["value"] for b in bars]
    errs = [0.0 if b["ci95"] is None else b["ci95"] for b in bars]
    ax.bar(labels, values, yerr=errs if any(errs) else None, capsize=4)
    ax.set_ylabel("value")
    _finish(fig, ax, ref_lines, out)
