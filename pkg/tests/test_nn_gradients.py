"""Gradient correctness of every differentiable primitive vs finite differences."""

from __future__ import annotations

import numpy as np
import pytest

import tailor.nn as nn
from gradcheck import check_gradients

RTOL = 1e-5
RNG = np.random.default_rng(1234)


def rand(*shape):
    return RNG.normal(0.0, 1.0, shape)


def test_sigmoid_at_zero():
    out = nn.sigmoid(nn.Tensor(np.zeros(3)))
    assert np.allclose(out.data, 0.5)


def test_conv_identity_kernel():
    img = RNG.random((1, 1, 8, 8))
    kernel = np.ones((1, 1, 1, 1))
    out = nn.conv2d(nn.Tensor(img), nn.Tensor(kernel), stride=1, padding="same")
    assert np.array_equal(out.data, img)


def test_shape_mismatch_named_in_error():
    with pytest.raises(nn.ShapeError, match=r"\(2, 3\)"):
        nn.matmul(nn.Tensor(rand(2, 3)), nn.Tensor(rand(4, 2)))


@pytest.mark.parametrize("trial", range(5))
def test_matmul_gradient(trial):
    a, b = rand(3, 4), rand(4, 2)
    err = check_gradients(lambda ts: nn.tsum(nn.matmul(ts[0], ts[1])), [a, b])
    assert err < RTOL


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "same"), (1, "valid"), (2, "valid")])
def test_conv2d_gradient(stride, padding):
    x, w = rand(2, 3, 6, 6), rand(4, 3, 3, 3)
    err = check_gradients(
        lambda ts: nn.tsum(nn.mul(nn.conv2d(ts[0], ts[1], stride=stride, padding=padding),
                                  nn.Tensor(np.ones(1)))), [x, w])
    assert err < RTOL


@pytest.mark.parametrize("k,stride,pad", [(4, 2, 1), (2, 2, 0), (3, 1, 1)])
def test_conv_transpose2d_gradient(k, stride, pad):
    x, w = rand(2, 3, 4, 4), rand(3, 2, k, k)
    err = check_gradients(
        lambda ts: nn.tsum(nn.conv_transpose2d(ts[0], ts[1], stride=stride, padding=pad)),
        [x, w])
    assert err < RTOL


def test_conv_transpose_doubles_spatial_size():
    x, w = rand(1, 2, 5, 5), rand(2, 3, 4, 4)
    out = nn.conv_transpose2d(nn.Tensor(x), nn.Tensor(w), stride=2, padding=1)
    assert out.shape == (1, 3, 10, 10)


def test_group_norm_gradient():
    x, gamma, beta = rand(2, 4, 3, 3), rand(4), rand(4)
    weight = rand(2, 4, 3, 3)
    err = check_gradients(
        lambda ts: nn.tsum(nn.mul(nn.group_norm(ts[0], ts[1], ts[2], groups=2), nn.Tensor(weight))),
        [x, gamma, beta], h=1e-5)
    assert err < 1e-4  # groupnorm mixes a 1/sqrt(var) factor; slightly looser


@pytest.mark.parametrize("op", [nn.relu, nn.silu, nn.sigmoid])
def test_activation_gradients(op):
    x = rand(4, 5) + 0.1  # keep clear of relu kink
    weight = rand(4, 5)
    err = check_gradients(lambda ts: nn.tsum(nn.mul(op(ts[0]), nn.Tensor(weight))), [x])
    assert err < RTOL


def test_add_mul_scale_gradients():
    a, b = rand(3, 4), rand(3, 4)
    err = check_gradients(
        lambda ts: nn.tsum(nn.scale(nn.mul(nn.add(ts[0], ts[1]), ts[0]), 1.7)), [a, b])
    assert err < RTOL


def test_broadcast_add_gradient():
    a, b = rand(2, 3, 4), rand(4)
    weight = rand(2, 3, 4)
    err = check_gradients(lambda ts: nn.tsum(nn.mul(nn.add(ts[0], ts[1]), nn.Tensor(weight))),
                          [a, b])
    assert err < RTOL


def test_mean_sum_gradients():
    x = rand(3, 4, 2)
    err = check_gradients(lambda ts: nn.tmean(nn.mul(ts[0], ts[0])), [x])
    assert err < RTOL
    err = check_gradients(lambda ts: nn.tsum(nn.tmean(ts[0], axis=(1, 2)), axis=0), [x])
    assert err < RTOL


def test_embedding_gradient():
    table = rand(5, 3)
    idx = np.array([0, 2, 2, 4])
    weight = rand(4, 3)
    err = check_gradients(
        lambda ts: nn.tsum(nn.mul(nn.embedding(ts[0], idx), nn.Tensor(weight))), [table])
    assert err < RTOL


def test_mse_gradient_and_values():
    p = rand(6)
    t = rand(6)
    err = check_gradients(lambda ts: nn.mse(ts[0], t), [p])
    assert err < RTOL
    # loss = mse(p, p) has zero gradient
    x = nn.Tensor(rand(4), requires_grad=True)
    nn.backprop(nn.mse(x, x.data.copy()))
    assert np.allclose(x.grad, 0.0)


def test_bce_with_logits_gradient():
    x = rand(8)
    z = (RNG.random(8) > 0.5).astype(np.float64)
    err = check_gradients(lambda ts: nn.bce_with_logits(ts[0], z), [x])
    assert err < RTOL


def test_reshape_concat_gradients():
    a, b = rand(2, 6), rand(2, 2)
    weight = rand(2, 8)
    err = check_gradients(
        lambda ts: nn.tsum(nn.mul(nn.concat([nn.reshape(ts[0], (2, 6)), ts[1]], axis=1),
                                  nn.Tensor(weight))), [a, b])
    assert err < RTOL


def test_backprop_rejects_non_scalar():
    x = nn.Tensor(rand(3), requires_grad=True)
    y = nn.add(x, x)
    with pytest.raises(nn.NonScalarLoss):
        nn.backprop(y)


def test_sum_loss_gives_unit_gradient():
    x = nn.Tensor(rand(3, 3), requires_grad=True)
    nn.backprop(nn.tsum(x))
    assert np.array_equal(x.grad, np.ones((3, 3)))


def test_two_layer_composite_gradient():
    """Random dense->silu->dense->mse composite matches finite differences."""
    w1, b1, w2 = rand(5, 4), rand(4), rand(4, 1)
    x = rand(3, 5)
    target = rand(3, 1)

    def build(ts):
        h = nn.silu(nn.add(nn.matmul(nn.Tensor(x), ts[0]), ts[1]))
        return nn.mse(nn.matmul(h, ts[2]), target)

    err = check_gradients(build, [w1, b1, w2])
    assert err < RTOL


def test_backprop_deterministic():
    w = rand(4, 3)
    x = rand(2, 4)

    def run():
        wt = nn.Tensor(w.copy(), requires_grad=True)
        nn.backprop(nn.tsum(nn.silu(nn.matmul(nn.Tensor(x.copy()), wt))))
        return wt.grad

    g1, g2 = run(), run()
    assert np.array_equal(g1, g2)


def test_graph_topological_order():
    x = nn.Tensor(rand(2, 2), requires_grad=True)
    y = nn.mul(nn.add(x, x), x)
    z = nn.tsum(y)
    graph = nn.Graph.trace(z)
    pos = {id(n): i for i, n in enumerate(graph.nodes)}
    for node in graph.nodes:
        for parent in node.parents:
            assert pos[id(parent)] < pos[id(node)]
