"""Series aggregation: seed-averaged curves with 95% t-intervals, histogram
grouping, and bar extraction."""

from __future__ import annotations

import numpy as np
import scipy.stats


class MissingTagError(ValueError):
    """Raised when no input contains the requested (phase, tag) series."""


def ci_half_width(values):
    """95% t-interval half-width of the mean; None for a single value."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return None
    sd = values.std(ddof=1)
    return float(scipy.stats.t.ppf(0.975, n - 1) * sd / np.sqrt(n))


def aggregate_curves(records, tag, phase=None):
    """Aggregate one tag across seeds into {step -> mean, ci}.

    Seeds are identified by (source file, seed field). At each step the mean
    is over the seeds that logged that step; ci is None when only one did.
    """
    per_seed = {}
    for rec in records:
        if rec["tag"] != tag:
            continue
        if phase is not None and rec["phase"] != phase:
            continue
        key = (rec.get("_source"), rec["seed"])
        # Keep the last value a seed logged for a step (e.g. after a resume).
        per_seed.setdefault(key, {})[int(rec["step"])] = float(rec["value"])
    if not per_seed:
        raise MissingTagError(
            f"no records with tag {tag!r}" + (f" and phase {phase!r}" if phase else ""))

    steps = sorted({s for curve in per_seed.values() for s in curve})
    out = []
    for step in steps:
        values = [curve[step] for curve in per_seed.values() if step in curve]
        out.append({
            "step": step,
            "mean": float(np.mean(values)),
            "ci95": ci_half_width(values),
            "n_seeds": len(values),
        })
    return {"tag": tag, "phase": phase, "n_series": len(per_seed), "points": out}


def histogram_series(dump):
    """Per-dimension, per-latent sample lists from an action-histogram dump."""
    out = []
    for dim, groups in enumerate(dump["per_dim"]):
        for latent_id in sorted(groups, key=str):
            values = [float(v) for v in groups[latent_id]]
            out.append({"action_dim": dim, "latent": str(latent_id),
                        "values": values})
    return out


def bar_series(payload):
    """Labelled bars from either a percentile study or an explicit bar list."""
    if "rows" in payload:  # percentile study
        return [{"label": f"p{row['percentile']:g}",
                 "value": float(row["mean_score"]),
                 "ci95": None if row.get("ci95") is None else float(row["ci95"])}
                for row in payload["rows"]]
    if "bars" in payload:
        return [{"label": str(b["label"]), "value": float(b["value"]),
                 "ci95": None if b.get("ci95") is None else float(b["ci95"])}
                for b in payload["bars"]]
    raise ValueError("bar input needs a 'rows' (percentile study) or 'bars' list")
