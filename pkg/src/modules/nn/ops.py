"""
Tensor Operator Module

Dense NCHW operators on numpy float64 arrays: convolution, ReLU, pooling,
batch-norm, linear and residual add, each with a fake-quantized variant.

Fake quantization computes in real arithmetic and rounds onto the fixed-point
grid at fixed points: weights once per forward, activations at every layer
output. Accumulation inside a convolution is exact.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.exceptions import DataError, NonFiniteError, ShapeMismatchError
from modules.fixedpoint import QFormat, quantize_array


Tensor = np.ndarray


@dataclass(frozen=True)
class QuantConfig:
    """
    Where and how values are rounded. When disabled every operator takes
    the float path unchanged.
    """
    weight_format: QFormat
    activation_format: QFormat
    enabled: bool = True

    @classmethod
    def uniform(cls, q: QFormat, enabled: bool = True) -> "QuantConfig":
        """Same format for weights and activations (the network-wide sweep setting)."""
        return cls(weight_format=q, activation_format=q, enabled=enabled)

    def act(self, x: Tensor) -> Tensor:
        return quantize_array(x, self.activation_format) if self.enabled else x

    def weight(self, x: Tensor) -> Tensor:
        return quantize_array(x, self.weight_format) if self.enabled else x


@dataclass(frozen=True)
class ConvParams:
    """Convolution weights [out, in, kh, kw], optional bias [out], stride and zero padding."""
    weights: Tensor
    bias: Optional[Tensor] = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeMismatchError("ConvParams", "weights.ndim", 4, self.weights.ndim)
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ShapeMismatchError("ConvParams", "bias", (self.out_channels,), self.bias.shape)
        if self.stride < 1:
            raise ShapeMismatchError("ConvParams", "stride", ">= 1", self.stride)
        if self.padding < 0:
            raise ShapeMismatchError("ConvParams", "padding", ">= 0", self.padding)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_h(self) -> int:
        return self.weights.shape[2]

    @property
    def kernel_w(self) -> int:
        return self.weights.shape[3]


@dataclass(frozen=True)
class BatchNormParams:
    """Per-channel affine parameters and running statistics."""
    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    eps: float = 1e-5

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def check_finite(x: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(where)
    return x


# ============= CONVOLUTION =============

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: Tensor, kh: int, kw: int, stride: int, padding: int) -> Tuple[Tensor, int, int]:
    """
    Patch matrix of shape (N * H' * W', C * kh * kw), rows ordered (n, h', w'),
    columns ordered (c, i, j) to match weights.reshape(O, -1).
    """
    n, c, _, _ = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * kh * kw)
    return cols, out_h, out_w


def col2im(dcols: Tensor, input_shape: Tuple[int, ...], kh: int, kw: int,
           stride: int, padding: int, out_h: int, out_w: int) -> Tensor:
    """Adjoint of im2col: scatter-add patch gradients back onto the input."""
    n, c, h, w = input_shape
    patches = dcols.reshape(n, out_h, out_w, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    dx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += patches[..., i, j]
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx


def _validate_conv_input(x: Tensor, p: ConvParams, op: str) -> None:
    if x.ndim != 4:
        raise ShapeMismatchError(op, "input.ndim", 4, x.ndim)
    if x.shape[1] != p.in_channels:
        raise ShapeMismatchError(op, "channels", p.in_channels, x.shape[1])
    if conv_output_size(x.shape[2], p.kernel_h, p.stride, p.padding) < 1:
        raise ShapeMismatchError(op, "height", f">= {p.kernel_h - 2 * p.padding}", x.shape[2])
    if conv_output_size(x.shape[3], p.kernel_w, p.stride, p.padding) < 1:
        raise ShapeMismatchError(op, "width", f">= {p.kernel_w - 2 * p.padding}", x.shape[3])


def _conv(x: Tensor, weights: Tensor, bias: Optional[Tensor], stride: int, padding: int) -> Tensor:
    n = x.shape[0]
    o, _, kh, kw = weights.shape
    cols, out_h, out_w = im2col(x, kh, kw, stride, padding)
    out = cols @ weights.reshape(o, -1).T
    if bias is not None:
        out = out + bias
    return out.reshape(n, out_h, out_w, o).transpose(0, 3, 1, 2)


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Cross-correlation with zero padding: [N,C,H,W] -> [N,O,H',W']."""
    _validate_conv_input(x, p, "conv2d")
    return _conv(x, p.weights, p.bias, p.stride, p.padding)


def conv2d_quant(x: Tensor, p: ConvParams, qc: QuantConfig) -> Tensor:
    """
    Fake-quantized convolution: weights on the weight grid, bias and output
    on the activation grid. The input is assumed to be on the activation grid.
    """
    if not qc.enabled:
        return conv2d(x, p)
    _validate_conv_input(x, p, "conv2d_quant")
    bias = qc.act(p.bias) if p.bias is not None else None
    out = _conv(x, qc.weight(p.weights), bias, p.stride, p.padding)
    return qc.act(out)


# ============= ELEMENTWISE =============

def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_quant(x: Tensor, qc: QuantConfig) -> Tensor:
    return qc.act(relu(x))


def quantize_tensor(t: Tensor, q: QFormat) -> Tensor:
    return quantize_array(t, q)


def residual_add(x: Tensor, shortcut: Tensor) -> Tensor:
    if x.shape != shortcut.shape:
        raise ShapeMismatchError("residual_add", "shape", x.shape, shortcut.shape)
    return x + shortcut


# ============= POOLING =============

def pool_windows(x: Tensor, window: int, stride: int, op: str) -> Tensor:
    """Pooling windows of shape (N, C, H', W', window * window)."""
    if x.ndim != 4:
        raise ShapeMismatchError(op, "input.ndim", 4, x.ndim)
    if window > x.shape[2]:
        raise ShapeMismatchError(op, "height", f">= {window}", x.shape[2])
    if window > x.shape[3]:
        raise ShapeMismatchError(op, "width", f">= {window}", x.shape[3])
    windows = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    return windows.reshape(windows.shape[:4] + (window * window,))


def maxpool2d(x: Tensor, window: int = 2, stride: Optional[int] = None) -> Tensor:
    stride = stride or window
    return pool_windows(x, window, stride, "maxpool2d").max(axis=-1)


def global_avgpool(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N,C], mean over all spatial positions."""
    if x.ndim != 4:
        raise ShapeMismatchError("global_avgpool", "input.ndim", 4, x.ndim)
    return x.mean(axis=(2, 3))


# ============= NORMALIZATION =============

def batchnorm(x: Tensor, bn: BatchNormParams) -> Tensor:
    """Inference-mode batch-norm with running statistics."""
    if x.shape[1] != bn.channels:
        raise ShapeMismatchError("batchnorm", "channels", bn.channels, x.shape[1])
    scale = bn.gamma / np.sqrt(bn.running_var + bn.eps)
    shift = bn.beta - bn.running_mean * scale
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def batchnorm_fold(p: ConvParams, bn: BatchNormParams) -> ConvParams:
    """
    Absorb inference-mode batch-norm into the preceding convolution so that
    conv2d(x, folded) == batchnorm(conv2d(x, p), bn).
    """
    if bn.channels != p.out_channels:
        raise ShapeMismatchError("batchnorm_fold", "channels", p.out_channels, bn.channels)
    denom = bn.running_var + bn.eps
    if np.any(denom <= 0):
        raise DataError("batchnorm_fold: running_var + eps must be positive")
    scale = bn.gamma / np.sqrt(denom)
    bias = p.bias if p.bias is not None else np.zeros(p.out_channels)
    return ConvParams(
        weights=p.weights * scale[:, None, None, None],
        bias=(bias - bn.running_mean) * scale + bn.beta,
        stride=p.stride,
        padding=p.padding,
    )


# ============= DENSE =============

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """[N,D] @ weight[K,D].T + bias[K]."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeMismatchError("linear", "features", weight.shape[1], x.shape[-1])
    out = x @ weight.T
    return out + bias if bias is not None else out
