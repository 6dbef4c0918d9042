"""
Reverse-mode rules for the fixed operator set.

Each *_backward function takes the gradient of the loss with respect to an
operator's output plus what the forward pass recorded, and returns the
gradients with respect to the operator's inputs and parameters.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from core.exceptions import ShapeMismatchError
from modules.fixedpoint import QFormat, in_range_mask
from modules.nn.ops import Tensor, col2im, im2col, pool_windows


@dataclass
class TapeEntry:
    name: str
    kind: str
    cache: Dict[str, Any] = field(default_factory=dict)


class GradientTape:
    """
    Forward values recorded layer by layer, enough to compute exact
    gradients of the loss with respect to every weight.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def record(self, name: str, kind: str, **cache) -> TapeEntry:
        entry = TapeEntry(name=name, kind=kind, cache=cache)
        self.entries.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self.entries)

    def reversed(self) -> List[TapeEntry]:
        return list(reversed(self.entries))


# ============= QUANTIZER =============

def ste_backward(grad_out: Tensor, pre_quant_input: Tensor, q: QFormat) -> Tensor:
    """
    Clipped straight-through estimator: identity inside the representable
    range, zero where the forward pass saturated.
    """
    if grad_out.shape != pre_quant_input.shape:
        raise ShapeMismatchError("ste_backward", "grad", pre_quant_input.shape, grad_out.shape)
    return grad_out * in_range_mask(pre_quant_input, q)


# ============= CONVOLUTION =============

def conv2d_backward(grad_out: Tensor, x: Tensor, weights: Tensor, stride: int,
                    padding: int) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (dx, dweights, dbias)."""
    o, _, kh, kw = weights.shape
    cols, out_h, out_w = im2col(x, kh, kw, stride, padding)
    grad_flat = grad_out.transpose(0, 2, 3, 1).reshape(-1, o)
    dweights = (grad_flat.T @ cols).reshape(weights.shape)
    dbias = grad_flat.sum(axis=0)
    dcols = grad_flat @ weights.reshape(o, -1)
    dx = col2im(dcols, x.shape, kh, kw, stride, padding, out_h, out_w)
    return dx, dweights, dbias


# ============= ELEMENTWISE / POOLING =============

def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    return grad_out * (x > 0)


def maxpool2d_backward(grad_out: Tensor, x: Tensor, window: int, stride: int) -> Tensor:
    """Routes each window's gradient to its first maximal element."""
    argmax = pool_windows(x, window, stride, "maxpool2d").argmax(axis=-1)
    out_h, out_w = grad_out.shape[2], grad_out.shape[3]
    dx = np.zeros_like(x)
    for i in range(window):
        for j in range(window):
            routed = grad_out * (argmax == i * window + j)
            dx[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += routed
    return dx


def global_avgpool_backward(grad_out: Tensor, input_shape: Tuple[int, ...]) -> Tensor:
    n, c, h, w = input_shape
    return np.broadcast_to(grad_out[:, :, None, None] / (h * w), input_shape).copy()


# ============= BATCH-NORM =============

def batchnorm_train_forward(x: Tensor, gamma: Tensor, beta: Tensor,
                            eps: float) -> Tuple[Tensor, Dict[str, Any]]:
    """Normalizes with batch statistics; returns output and backward cache."""
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = x_hat * gamma[None, :, None, None] + beta[None, :, None, None]
    return out, {"x_hat": x_hat, "inv_std": inv_std, "mean": mean, "var": var}


def batchnorm_train_backward(grad_out: Tensor, cache: Dict[str, Any],
                             gamma: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (dx, dgamma, dbeta) through the batch statistics."""
    x_hat = cache["x_hat"]
    inv_std = cache["inv_std"]
    m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    dbeta = grad_out.sum(axis=(0, 2, 3))
    dgamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    dx_hat = grad_out * gamma[None, :, None, None]
    dx = (inv_std[None, :, None, None] / m) * (
        m * dx_hat
        - dx_hat.sum(axis=(0, 2, 3))[None, :, None, None]
        - x_hat * (dx_hat * x_hat).sum(axis=(0, 2, 3))[None, :, None, None]
    )
    return dx, dgamma, dbeta


def batchnorm_eval_backward(grad_out: Tensor, x: Tensor, gamma: Tensor, running_mean: Tensor,
                            running_var: Tensor, eps: float) -> Tuple[Tensor, Tensor, Tensor]:
    """Backward of inference-mode batch-norm (running statistics are constants)."""
    inv_std = 1.0 / np.sqrt(running_var + eps)
    x_hat = (x - running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    dx = grad_out * (gamma * inv_std)[None, :, None, None]
    return dx, (grad_out * x_hat).sum(axis=(0, 2, 3)), grad_out.sum(axis=(0, 2, 3))


# ============= DENSE / LOSS =============

def linear_backward(grad_out: Tensor, x: Tensor, weight: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


def softmax(logits: Tensor) -> Tensor:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tuple[float, Tensor, Tensor]:
    """
    Mean softmax cross-entropy.

    Returns:
        (loss, dlogits, probabilities)
    """
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), labels].mean())
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n, probs
