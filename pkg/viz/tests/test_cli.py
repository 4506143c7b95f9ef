"""End-to-end CLI checks and golden-file comparison of sidecar JSON."""

import hashlib
import os

from pdtviz import cli

HERE = os.path.dirname(__file__)
FIX = os.path.join(HERE, "fixtures")
GOLDEN = os.path.join(HERE, "golden")

SEED_FILES = [os.path.join(FIX, f"metrics_seed{s}.jsonl") for s in range(3)]


def run(args):
    return cli.main(args)


def sidecar(out):
    with open(out + ".json", "rb") as fh:
        return fh.read()


def test_curves_sidecar_matches_golden(tmp_path):
    out = str(tmp_path / "curves.png")
    assert run(["curves", "--in", *SEED_FILES, "--out", out]) == 0
    assert os.path.exists(out)
    with open(os.path.join(GOLDEN, "curves.json"), "rb") as fh:
        assert sidecar(out) == fh.read()


def test_hist_sidecar_matches_golden(tmp_path):
    out = str(tmp_path / "hist.png")
    assert run(["hist", "--in", os.path.join(FIX, "histogram.json"),
                "--out", out]) == 0
    with open(os.path.join(GOLDEN, "hist.json"), "rb") as fh:
        assert sidecar(out) == fh.read()


def test_bars_sidecar_matches_golden(tmp_path):
    out = str(tmp_path / "bars.png")
    assert run(["bars", "--in", os.path.join(FIX, "percentiles.json"),
                "--out", out]) == 0
    with open(os.path.join(GOLDEN, "bars.json"), "rb") as fh:
        assert sidecar(out) == fh.read()


def test_sidecar_deterministic_and_inputs_unmutated(tmp_path):
    before = [hashlib.sha256(open(p, "rb").read()).hexdigest() for p in SEED_FILES]
    outs = [str(tmp_path / f"c{i}.png") for i in range(2)]
    for out in outs:
        assert run(["curves", "--in", *SEED_FILES, "--out", out]) == 0
    assert sidecar(outs[0]) == sidecar(outs[1])
    after = [hashlib.sha256(open(p, "rb").read()).hexdigest() for p in SEED_FILES]
    assert before == after


def test_missing_tag_exits_nonzero_naming_it(tmp_path, capsys):
    out = str(tmp_path / "c.png")
    assert run(["curves", "--in", *SEED_FILES, "--out", out,
                "--tag", "does_not_exist"]) == 1
    assert "does_not_exist" in capsys.readouterr().err
    assert not os.path.exists(out)


def test_malformed_lines_skipped_with_count(tmp_path, capsys):
    out = str(tmp_path / "c.png")
    assert run(["curves", "--in", os.path.join(FIX, "metrics_malformed.jsonl"),
                "--out", out]) == 0
    err = capsys.readouterr().err
    assert "skipped 2" in err
    assert b'"skipped_lines": 2' in sidecar(out)


def test_single_seed_ci_null(tmp_path):
    out = str(tmp_path / "c.png")
    assert run(["curves", "--in", SEED_FILES[0], "--out", out]) == 0
    assert b'"ci95": null' in sidecar(out)
