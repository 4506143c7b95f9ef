"""`plot` entry point: curves | hist | bars.

Every invocation writes the image plus a deterministic sidecar JSON
(`<image>.json`) holding the exact numeric series plotted, so downstream
checks can compare numbers instead of pixels.
"""

from __future__ import annotations

import argparse
import sys

from . import io, render, series


def _build_parser():
    p = argparse.ArgumentParser(prog="plot", description=__doc__)
    sub = p.add_subparsers(dest="kind", required=True)

    def common(sp):
        sp.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="PATH", help="input metrics JSONL / analysis JSON")
        sp.add_argument("--out", required=True, help="output image file")
        sp.add_argument("--ref-line", dest="ref_lines", type=float, action="append",
                        default=[], help="dashed horizontal reference line")

    sp = sub.add_parser("curves", help="seed-aggregated learning curves with CI band")
    common(sp)
    sp.add_argument("--tag", default="normalized_score")
    sp.add_argument("--phase", default=None)

    sp = sub.add_parser("hist", help="per-latent action histograms")
    common(sp)

    sp = sub.add_parser("bars", help="bar chart from a percentile study or bar list")
    common(sp)
    return p


def cmd_curves(args):
    records, skipped = io.read_metrics_jsonl(args.inputs)
    if skipped:
        print(f"skipped {skipped} malformed line(s)", file=sys.stderr)
    curve = series.aggregate_curves(records, args.tag, phase=args.phase)
    render.render_curves(curve, args.ref_lines, args.out)
    io.write_sidecar({"kind": "curves", "skipped_lines": skipped, "series": curve},
                     args.out)
    return 0


def cmd_hist(args):
    if len(args.inputs) != 1:
        raise ValueError("hist takes exactly one histogram-dump JSON")
    dump = io.read_json(args.inputs[0])
    hist = series.histogram_series(dump)
    if not hist:
        raise series.MissingTagError("histogram dump contains no samples")
    render.render_hist(hist, args.out)
    io.write_sidecar({"kind": "hist", "timestep": dump.get("timestep"),
                      "series": hist}, args.out)
    return 0


def cmd_bars(args):
    if len(args.inputs) != 1:
        raise ValueError("bars takes exactly one study JSON")
    bars = series.bar_series(io.read_json(args.inputs[0]))
    render.render_bars(bars, args.ref_lines, args.out)
    io.write_sidecar({"kind": "bars", "series": bars}, args.out)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return {"curves": cmd_curves, "hist": cmd_hist, "bars": cmd_bars}[args.kind](args)
    except (series.MissingTagError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
