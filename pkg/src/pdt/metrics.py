"""Append-only JSONL metrics sink.

Each record is one line: {"step", "phase", "tag", "value", "seed"}.
Writes are line-atomic (single write + flush) so the file stays valid
JSON-per-line even after a crash.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass


@dataclass
class MetricsRecord:
    step: int
    phase: str  # pretrain | warmup | finetune | eval | analysis
    tag: str
    value: float
    seed: int


class MetricsWriter:
    def __init__(self, path=None, seed=0):
        self.path = path
        self.seed = seed
        self.records = []
        self._fh = open(path, "a") if path else None

    def log(self, step, phase, tag, value):
        rec = MetricsRecord(int(step), phase, tag, float(value), self.seed)
        self.records.append(rec)
        if self._fh is not None:
            self._fh.write(json.dumps(asdict(rec)) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_metrics(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(MetricsRecord(**json.loads(line)))
    return out
