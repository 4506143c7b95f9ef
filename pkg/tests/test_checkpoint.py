"""Checkpoint format, integrity checks, and exact resume."""

import numpy as np
import pytest

from pdt import checkpoint as CK
from pdt import data as D
from pdt import envs as E
from pdt import training as T
from pdt.metrics import MetricsWriter

from conftest import tiny_config


def trained_state(seed=0):
    cfg = tiny_config(seed=seed)
    env = E.make_env(cfg.env_id)
    ds = D.generate_dataset(env, "medium-replay", cfg.n_trajectories, cfg.dataset_seed,
                            stats=D.NormalizationStats(-77.0, -9.4)).reward_free()
    return T.pretrain(ds, cfg)


def assert_states_equal(a, b):
    for (n1, p1), (n2, p2) in zip(a.model.named_params(), b.model.named_params()):
        assert n1 == n2
        assert np.array_equal(p1.data, p2.data), n1
    for o1, o2 in ((a.main_opt, b.main_opt), (a.alpha_opt, b.alpha_opt)):
        assert o1.step_count == o2.step_count
        for (_, m1), (_, m2) in zip(o1.state_arrays(), o2.state_arrays()):
            assert np.array_equal(m1, m2)
    assert a.rng.bit_generator.state == b.rng.bit_generator.state
    assert (a.pretrain_steps, a.finetune_steps, a.env_transitions) == \
           (b.pretrain_steps, b.finetune_steps, b.env_transitions)
    assert (a.rtg_mu, a.rtg_sigma) == (b.rtg_mu, b.rtg_sigma)
    assert len(a.buffer) == len(b.buffer)
    for t1, t2 in zip(a.buffer.trajectories, b.buffer.trajectories):
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.rewards, t2.rewards)


def test_round_trip_bit_exact(tmp_path):
    state = trained_state()
    # Populate the buffer so its serialization is exercised too.
    for _ in range(3):
        T._insert_rollout(state, T.rollout(state, mode="prior"))
    path = tmp_path / "c.ckpt"
    CK.save_checkpoint(state, path)
    assert_states_equal(state, CK.load_checkpoint(path))


def test_manifest_readable_without_payload(tmp_path):
    state = trained_state()
    path = tmp_path / "c.ckpt"
    CK.save_checkpoint(state, path)
    manifest = CK.read_manifest(path)
    assert manifest["format_version"] == CK.FORMAT_VERSION
    assert manifest["conditioning"] == "future"
    assert manifest["counters"]["pretrain_steps"] == state.pretrain_steps
    assert any(e["name"].startswith("param/") for e in manifest["arrays"])


def test_truncated_payload_detected(tmp_path):
    state = trained_state()
    path = tmp_path / "c.ckpt"
    CK.save_checkpoint(state, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-200])
    with pytest.raises(CK.CheckpointError, match="hash mismatch|truncated"):
        CK.load_checkpoint(path)


def test_corrupted_payload_detected(tmp_path):
    state = trained_state()
    path = tmp_path / "c.ckpt"
    CK.save_checkpoint(state, path)
    blob = bytearray(path.read_bytes())
    blob[-10] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CK.CheckpointError, match="hash mismatch"):
        CK.load_checkpoint(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(CK.CheckpointError, match="magic"):
        CK.read_manifest(path)


def test_resume_reproduces_metric_stream(tmp_path):
    """Save mid-finetune, then continue twice: the original in-process state
    and the reloaded checkpoint must emit bit-identical metrics."""
    state = trained_state()
    state.cfg.finetune.total_transitions = 250
    T.finetune(state)  # phase 1 + warmup + a few updates
    path = tmp_path / "mid.ckpt"
    CK.save_checkpoint(state, path)

    state.cfg.finetune.total_transitions = 450
    m_a = MetricsWriter(seed=0)
    T.finetune(state, metrics=m_a)

    resumed = CK.load_checkpoint(path)
    resumed.cfg.finetune.total_transitions = 450
    m_b = MetricsWriter(seed=0)
    T.finetune(resumed, metrics=m_b)

    assert len(m_a.records) == len(m_b.records)
    for ra, rb in zip(m_a.records, m_b.records):
        assert ra == rb
    assert_states_equal(state, resumed)
