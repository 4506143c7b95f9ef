"""Input parsing: metrics JSONL streams and analysis JSON files."""

from __future__ import annotations

import json

REQUIRED_KEYS = ("step", "phase", "tag", "value", "seed")


def read_metrics_jsonl(paths):
    """Parse metrics records from one or more JSONL files.

    Returns (records, skipped) where skipped counts malformed lines. Records
    keep their source path so seeds logged to separate files stay separate
    even if they reused the same seed number.
    """
    records = []
    skipped = 0
    for path in paths:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    skipped += 1
                    continue
                if not isinstance(rec, dict) or any(k not in rec for k in REQUIRED_KEYS):
                    skipped += 1
                    continue
                rec["_source"] = path
                records.append(rec)
    return records, skipped


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_sidecar(payload, image_path):
    """Write the deterministic numeric sidecar next to the rendered image."""
    path = image_path + ".json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
