"""Layer-level checks: shapes, adjointness, and finite-difference gradients."""

import numpy as np
import pytest

from gradcheck import check_layer
from zsncd.nn import (GDN, GDN_BETA_MIN, Conv2d, ConvTranspose2d, Dense, ReLU,
                      glorot_uniform)


def rng64(seed):
    return np.random.default_rng(seed)


def test_glorot_bounds():
    r = rng64(0)
    w = glorot_uniform((50, 40), 50, 40, r, np.float64)
    limit = np.sqrt(6.0 / 90.0)
    assert np.abs(w).max() <= limit
    assert np.abs(w).max() > 0.8 * limit  # actually spreads over the range


def test_relu_forward_and_grad():
    r = rng64(1)
    x = r.standard_normal((4, 7))
    x = np.where(np.abs(x) < 0.1, 0.5, x)  # keep away from the kink
    layer = ReLU()
    np.testing.assert_allclose(layer.forward(x), np.maximum(x, 0.0))
    check_layer(layer, x, r)


def test_dense_grad():
    r = rng64(2)
    layer = Dense(6, 4, r, dtype=np.float64)
    check_layer(layer, r.standard_normal((5, 6)), r)


@pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1), (2, 0)])
def test_conv2d_grad(stride, pad):
    r = rng64(3)
    layer = Conv2d(2, 3, 3, stride, pad, r, dtype=np.float64)
    check_layer(layer, r.standard_normal((2, 6, 6, 2)), r)


def test_conv2d_output_shape():
    r = rng64(4)
    layer = Conv2d(1, 4, 3, 2, 1, r, dtype=np.float64)
    y = layer.forward(np.zeros((1, 8, 8, 1)), cache=False)
    assert y.shape == (1, 4, 4, 4)
    assert layer.out_hw(8, 8) == (4, 4)


@pytest.mark.parametrize("stride,pad,in_hw,out_hw", [
    (2, 0, (4, 4), (9, 9)),
    (2, 1, (4, 4), (8, 8)),
    (1, 0, (5, 5), (7, 7)),
])
def test_conv_transpose_grad(stride, pad, in_hw, out_hw):
    r = rng64(5)
    layer = ConvTranspose2d(3, 2, 3, stride, pad, out_hw, r, dtype=np.float64)
    x = r.standard_normal((2, *in_hw, 3))
    assert layer.forward(x, cache=False).shape == (2, *out_hw, 2)
    check_layer(layer, x, r)


def test_conv_transpose_is_exact_adjoint():
    # <conv(x), y> == <x, conv_T(y)> when both share the same kernel tensor
    r = rng64(6)
    conv = Conv2d(2, 5, 3, 2, 1, r, dtype=np.float64)
    tconv = ConvTranspose2d(5, 2, 3, 2, 1, (8, 8), r, dtype=np.float64)
    tconv.w.value = conv.w.value.copy()
    conv.b.value[:] = 0.0
    tconv.b.value[:] = 0.0
    x = r.standard_normal((3, 8, 8, 2))
    y = r.standard_normal((3, 4, 4, 5))
    lhs = float(np.sum(conv.forward(x, cache=False) * y))
    rhs = float(np.sum(x * tconv.forward(y, cache=False)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_conv_transpose_geometry_validation():
    r = rng64(7)
    with pytest.raises(ValueError):
        ConvTranspose2d(1, 1, 3, 2, 0, (2, 2), r)  # no adjoint conv exists
    layer = ConvTranspose2d(1, 1, 3, 2, 0, (9, 9), r)
    with pytest.raises(ValueError):
        layer.forward(np.zeros((1, 5, 5, 1)), cache=False)  # wrong input size


@pytest.mark.parametrize("inverse", [False, True])
def test_gdn_grad(inverse):
    r = rng64(8)
    layer = GDN(4, inverse=inverse, dtype=np.float64)
    # move off the all-default point so gamma gradients are exercised
    layer.gamma.value += 0.03 * r.random((4, 4))
    layer.beta.value += 0.2 * r.random(4)
    check_layer(layer, r.standard_normal((3, 2, 2, 4)), r)


def test_gdn_normalizes_and_igdn_expands():
    r = rng64(9)
    x = r.standard_normal((2, 3, 3, 5))
    g = GDN(5, dtype=np.float64)
    ig = GDN(5, inverse=True, dtype=np.float64)
    y = g.forward(x, cache=False)
    z = ig.forward(x, cache=False)
    d = g.beta.value + (x * x) @ g.gamma.value.T
    np.testing.assert_allclose(y, x / np.sqrt(d), rtol=1e-12)
    np.testing.assert_allclose(z, x * np.sqrt(d), rtol=1e-12)


def test_gdn_bounded_output_at_lower_clamp():
    # with beta at its floor the output can grow at most by 1/sqrt(beta_min)
    layer = GDN(3, dtype=np.float64)
    layer.beta.value[:] = GDN_BETA_MIN
    layer.gamma.value[:] = 0.0
    x = np.full((1, 1, 1, 3), 1e-3)
    y = layer.forward(x, cache=False)
    assert np.all(np.isfinite(y))
    np.testing.assert_allclose(np.abs(y), np.abs(x) / np.sqrt(GDN_BETA_MIN),
                               rtol=1e-12)


def test_gdn_finite_for_large_inputs():
    layer = GDN(8, dtype=np.float64)
    for scale in (1.0, 1e3, 1e6):
        y = layer.forward(scale * np.ones((1, 4, 4, 8)), cache=False)
        assert np.all(np.isfinite(y))
