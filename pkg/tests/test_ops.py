"""
Operator tests against naive loop oracles.
"""
import numpy as np
import pytest

from core.exceptions import DataError, NonFiniteError, ShapeMismatchError
from modules.fixedpoint import QFormat, quantize, quantize_array
from modules.nn import (
    BatchNormParams,
    ConvParams,
    QuantConfig,
    batchnorm,
    batchnorm_fold,
    conv2d,
    conv2d_quant,
    global_avgpool,
    linear,
    maxpool2d,
    quantize_tensor,
    relu,
    relu_quant,
    residual_add,
)


def naive_conv(x, w, b, stride, padding):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for ni in range(n):
        for oi in range(o):
            for y in range(oh):
                for xx in range(ow):
                    patch = xp[ni, :, y * stride:y * stride + kh, xx * stride:xx * stride + kw]
                    out[ni, oi, y, xx] = np.sum(patch * w[oi]) + (0.0 if b is None else b[oi])
    return out


def test_conv_sum_of_ones():
    out = conv2d(np.ones((1, 1, 2, 2)), ConvParams(weights=np.ones((1, 1, 2, 2))))
    np.testing.assert_array_equal(out, [[[[4.0]]]])


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 5, 5))
    out = conv2d(x, ConvParams(weights=np.ones((1, 1, 1, 1)), bias=np.zeros(1)))
    np.testing.assert_array_equal(out, x)


def test_conv_stride_two_padding_one_matches_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    out = conv2d(x, ConvParams(weights=w, stride=2, padding=1))
    assert out.shape == (1, 4, 4, 4)
    np.testing.assert_allclose(out, naive_conv(x, w, None, 2, 1), atol=1e-12)


def test_conv_random_instances_match_oracle():
    rng = np.random.default_rng(2)
    q = QFormat(4, 4)
    qc = QuantConfig.uniform(q)
    for _ in range(200):
        n, c, o = rng.integers(1, 5, size=3)
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        h, w_ = rng.integers(k, 13, size=2)
        x = rng.normal(size=(n, c, h, w_))
        w = rng.normal(size=(o, c, k, k))
        b = rng.normal(size=o) if rng.random() < 0.5 else None
        p = ConvParams(weights=w, bias=b, stride=stride, padding=padding)
        np.testing.assert_allclose(conv2d(x, p), naive_conv(x, w, b, stride, padding), atol=1e-6)

        xq = quantize_array(x, q)
        bq = None if b is None else quantize_array(b, q)
        expected = quantize_array(naive_conv(xq, quantize_array(w, q), bq, stride, padding), q)
        out = conv2d_quant(xq, p, qc)
        np.testing.assert_array_equal(out, expected)
        np.testing.assert_array_equal(quantize_array(out, q), out)


def test_conv_quant_saturates():
    qc = QuantConfig.uniform(QFormat(3, 0))
    out = conv2d_quant(np.ones((1, 1, 2, 2)), ConvParams(weights=np.ones((1, 1, 2, 2))), qc)
    np.testing.assert_array_equal(out, [[[[3.0]]]])


def test_conv_quant_high_precision_on_small_grid_values():
    rng = np.random.default_rng(3)
    q44 = QFormat(4, 4)
    x = quantize_array(rng.uniform(-1, 1, size=(1, 2, 4, 4)), q44)
    w = quantize_array(rng.uniform(-0.5, 0.5, size=(3, 2, 3, 3)), q44)
    p = ConvParams(weights=w, padding=1)
    np.testing.assert_array_equal(conv2d_quant(x, p, QuantConfig.uniform(QFormat(16, 16))), conv2d(x, p))


def test_disabled_quant_config_is_float_path():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 2, 6, 6))
    p = ConvParams(weights=rng.normal(size=(3, 2, 3, 3)), bias=rng.normal(size=3), padding=1)
    qc = QuantConfig.uniform(QFormat(3, 3), enabled=False)
    np.testing.assert_array_equal(conv2d_quant(x, p, qc), conv2d(x, p))
    np.testing.assert_array_equal(relu_quant(x, qc), relu(x))


def test_conv_shape_errors_name_the_dimension():
    p = ConvParams(weights=np.ones((1, 2, 3, 3)))
    with pytest.raises(ShapeMismatchError, match="channels"):
        conv2d(np.ones((1, 3, 5, 5)), p)
    with pytest.raises(ShapeMismatchError, match="height"):
        conv2d(np.ones((1, 2, 2, 5)), p)
    with pytest.raises(ShapeMismatchError, match="bias"):
        ConvParams(weights=np.ones((2, 1, 1, 1)), bias=np.ones(3))


def test_relu_examples():
    qc = QuantConfig.uniform(QFormat(4, 4))
    np.testing.assert_array_equal(relu(np.array([-1.0, 0.5])), [0.0, 0.5])
    np.testing.assert_array_equal(relu_quant(np.array([9.1]), qc), [7.9375])
    np.testing.assert_array_equal(relu_quant(np.array([0.03]), qc), [0.0])
    x = np.random.default_rng(5).normal(scale=5, size=100)
    np.testing.assert_array_equal(relu_quant(x, qc), quantize_tensor(relu(x), QFormat(4, 4)))


def test_quantize_tensor_is_elementwise_quantize():
    q = QFormat(4, 4)
    t = np.array([[7.95, 0.03125], [-100.0, 0.4]])
    expected = np.vectorize(lambda v: quantize(v, q))(t)
    np.testing.assert_array_equal(quantize_tensor(t, q), expected)
    with pytest.raises(NonFiniteError):
        quantize_tensor(np.array([1.0, np.nan]), q)


def test_pooling():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    np.testing.assert_array_equal(maxpool2d(x, 2), [[[[4.0]]]])
    np.testing.assert_array_equal(global_avgpool(np.full((2, 3, 4, 4), 1.5)), np.full((2, 3), 1.5))
    with pytest.raises(ShapeMismatchError):
        maxpool2d(x, 3)


def test_maxpool_matches_loop_oracle():
    x = np.random.default_rng(6).normal(size=(1, 2, 4, 4))
    expected = np.zeros((1, 2, 2, 2))
    for c in range(2):
        for i in range(2):
            for j in range(2):
                expected[0, c, i, j] = x[0, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
    np.testing.assert_array_equal(maxpool2d(x, 2, 2), expected)


def test_batchnorm_fold_identity_and_scale():
    rng = np.random.default_rng(7)
    p = ConvParams(weights=rng.normal(size=(2, 1, 3, 3)), bias=rng.normal(size=2))
    identity = BatchNormParams(np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), eps=0.0)
    folded = batchnorm_fold(p, identity)
    np.testing.assert_array_equal(folded.weights, p.weights)
    np.testing.assert_array_equal(folded.bias, p.bias)

    doubled = batchnorm_fold(p, BatchNormParams(np.full(2, 2.0), np.zeros(2), np.zeros(2), np.ones(2), eps=0.0))
    np.testing.assert_array_equal(doubled.weights, 2 * p.weights)
    np.testing.assert_array_equal(doubled.bias, 2 * p.bias)


def test_batchnorm_fold_matches_conv_then_bn():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 3, 6, 6))
    p = ConvParams(weights=rng.normal(size=(4, 3, 3, 3)), padding=1)
    bn = BatchNormParams(rng.uniform(0.5, 2, 4), rng.normal(size=4), rng.normal(size=4), rng.uniform(0.1, 2, 4))
    np.testing.assert_allclose(conv2d(x, batchnorm_fold(p, bn)), batchnorm(conv2d(x, p), bn), rtol=1e-6, atol=1e-12)


def test_batchnorm_fold_rejects_non_positive_variance():
    p = ConvParams(weights=np.ones((1, 1, 1, 1)))
    with pytest.raises(DataError):
        batchnorm_fold(p, BatchNormParams(np.ones(1), np.zeros(1), np.zeros(1), np.zeros(1), eps=0.0))


def test_linear_and_residual_add():
    x = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(linear(x, np.array([[1.0, 1.0], [0.0, 2.0]]), np.array([0.5, 0.0])), [[3.5, 4.0]])
    with pytest.raises(ShapeMismatchError):
        residual_add(np.ones((1, 2, 2, 2)), np.ones((1, 3, 2, 2)))
