"""AdamW recurrence, clipping, LR schedules, checkpoint round-trip."""

from __future__ import annotations

import numpy as np
import pytest

import tailor.nn as nn


def make_param(value):
    return nn.parameter(np.asarray(value, dtype=np.float32))


def test_zero_gradient_no_decay_is_identity():
    p = make_param([1.0, -2.0])
    opt = nn.AdamW([p], lr=0.1)
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    assert np.allclose(p.data, [1.0, -2.0])


def test_single_step_bias_corrected_unit_update():
    # hand evaluation: m_hat = 1, v_hat = 1 -> update = lr / (1 + eps)
    p = make_param([0.0])
    opt = nn.AdamW([p], lr=0.1, betas=(0.9, 0.999), weight_decay=0.0)
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    assert abs(p.data[0] + 0.1) < 1e-6


def test_decoupled_decay_shrinks_parameter():
    p = make_param([2.0])
    opt = nn.AdamW([p], lr=0.1, weight_decay=0.5)
    p.grad = np.zeros(1, dtype=np.float32)
    opt.step()
    assert np.isclose(p.data[0], 2.0 * (1 - 0.1 * 0.5))


def test_non_finite_gradient_rejected():
    p = make_param([1.0])
    opt = nn.AdamW([p], lr=0.1)
    p.grad = np.array([np.nan], dtype=np.float32)
    before = p.data.copy()
    with pytest.raises(nn.NonFiniteGradient):
        opt.step()
    assert np.array_equal(p.data, before)


def test_lr_zero_rejected():
    with pytest.raises(ValueError):
        nn.AdamW([make_param([1.0])], lr=0.0)


def test_three_steps_match_hand_rolled_recurrence():
    rng = np.random.default_rng(7)
    p0 = rng.normal(size=4).astype(np.float32)
    grads = [rng.normal(size=4).astype(np.float32) for _ in range(3)]
    lr, (b1, b2), eps, wd = 0.05, (0.9, 0.999), 1e-8, 0.01

    # independent oracle in f64
    p = p0.astype(np.float64).copy()
    m = np.zeros(4)
    v = np.zeros(4)
    for t, g in enumerate(grads, start=1):
        p *= (1 - lr * wd)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)

    param = make_param(p0)
    opt = nn.AdamW([param], lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
    for g in grads:
        param.grad = g.copy()
        opt.step()
    assert np.allclose(param.data, p, atol=1e-6)


def test_clip_gradients_values():
    p = make_param([0.0, 0.0, 0.0])
    p.grad = np.array([0.5, 3.7, -2.0], dtype=np.float32)
    nn.clip_gradients([p], 1.0)
    assert np.allclose(p.grad, [0.5, 1.0, -1.0])
    with pytest.raises(ValueError):
        nn.clip_gradients([p], 0.0)


def test_cosine_schedule_endpoints_and_monotone():
    base = 0.3
    assert nn.cosine_lr(0, 100, base) == base
    assert abs(nn.cosine_lr(100, 100, base)) < 1e-12
    values = [nn.cosine_lr(s, 100, base) for s in range(101)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        nn.cosine_lr(1, 0, base)


def test_multistep_schedule():
    assert nn.multistep_lr(5, 1.0, milestones=[10, 20]) == 1.0
    assert np.isclose(nn.multistep_lr(15, 1.0, milestones=[10, 20]), 0.1)
    assert np.isclose(nn.multistep_lr(25, 1.0, milestones=[10, 20]), 0.01)
    assert np.isclose(nn.lr_schedule(15, 100, 1.0, kind="multistep", milestones=[10]), 0.1)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    params = {"a.w": rng.normal(size=(3, 4)).astype(np.float32),
              "b": rng.normal(size=7).astype(np.float32)}
    cfg = {"arch": "tiny", "channels": [1, 2]}
    path = tmp_path / "model.ckpt"
    nn.save_checkpoint(path, cfg, params)
    cfg2, loaded = nn.load_checkpoint(path)
    assert cfg2 == cfg
    assert set(loaded) == set(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k].reshape(-1))
    # deterministic bytes for identical content
    path2 = tmp_path / "model2.ckpt"
    nn.save_checkpoint(path2, cfg, params)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(nn.CheckpointError):
        nn.load_checkpoint(path)
