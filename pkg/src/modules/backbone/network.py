"""
Backbone Forward / Backward

Runs a BackboneModel's layer program in float or fake-quantized mode, in
inference or training mode, optionally recording a GradientTape, and
back-propagates a feature gradient through the recorded tape.

Quantized mode (enabled QuantConfig): the input and every quant_point layer
output are rounded to the activation grid, conv weights to the weight grid and
conv biases to the activation grid. Batch-norm runs in float and only its
output is rounded. Backward passes gradients through every quantizer with the
clipped straight-through estimator.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.exceptions import ShapeMismatchError
from modules.backbone.graph import BackboneModel, LayerKind, LayerSpec
from modules.fixedpoint import in_range_mask
from modules.nn import autograd
from modules.nn.autograd import GradientTape, TapeEntry
from modules.nn.ops import (
    QuantConfig,
    Tensor,
    batchnorm,
    check_finite,
    conv2d,
    ConvParams,
    global_avgpool,
    maxpool2d,
    relu,
)


BN_MOMENTUM = 0.1


class _Pass:
    """State of one forward pass."""

    def __init__(self, model: BackboneModel, quant: Optional[QuantConfig], training: bool,
                 update_stats: bool, tape: Optional[GradientTape], trace: Optional[list]):
        self.model = model
        self.qc = quant if quant is not None and quant.enabled else None
        self.training = training
        self.update_stats = update_stats
        self.tape = tape
        self.trace = trace

    def act(self, pre: Tensor, quant_point: bool = True) -> Tuple[Tensor, Optional[np.ndarray]]:
        """Rounds a layer output; returns it with its STE mask (None in float mode)."""
        if self.qc is None or not quant_point:
            return pre, None
        return self.qc.act(pre), in_range_mask(pre, self.qc.activation_format)

    # ============= LAYERS =============

    def conv(self, prefix: str, x: Tensor, stride: int, padding: int, quant_point: bool,
             tape: Optional[GradientTape]) -> Tensor:
        p = self.model.conv_params(prefix, stride, padding)
        weights, bias = p.weights, p.bias
        weight_mask = bias_mask = None
        if self.qc is not None:
            weights = self.qc.weight(p.weights)
            weight_mask = in_range_mask(p.weights, self.qc.weight_format)
            if bias is not None:
                bias = self.qc.act(p.bias)
                bias_mask = in_range_mask(p.bias, self.qc.activation_format)
        pre = conv2d(x, ConvParams(weights=weights, bias=bias, stride=stride, padding=padding))
        out, mask = self.act(pre, quant_point)
        if tape is not None:
            tape.record(prefix, "conv", x=x, weights=weights, stride=stride, padding=padding,
                        has_bias=bias is not None, weight_mask=weight_mask, bias_mask=bias_mask,
                        out_mask=mask)
        return out

    def bn(self, prefix: str, x: Tensor, eps: float, quant_point: bool,
           tape: Optional[GradientTape]) -> Tensor:
        weights = self.model.weights
        gamma, beta = weights[f"{prefix}.weight"], weights[f"{prefix}.bias"]
        if x.shape[1] != gamma.shape[0]:
            raise ShapeMismatchError("batchnorm", "channels", gamma.shape[0], x.shape[1])
        if self.training:
            pre, cache = autograd.batchnorm_train_forward(x, gamma, beta, eps)
            if self.update_stats:
                count = x.shape[0] * x.shape[2] * x.shape[3]
                unbiased = cache["var"] * count / max(count - 1, 1)
                rm, rv = weights[f"{prefix}.running_mean"], weights[f"{prefix}.running_var"]
                rm *= 1.0 - BN_MOMENTUM
                rm += BN_MOMENTUM * cache["mean"]
                rv *= 1.0 - BN_MOMENTUM
                rv += BN_MOMENTUM * unbiased
        else:
            pre = batchnorm(x, self.model.bn_params(prefix, eps))
            cache = {"x": x}
        out, mask = self.act(pre, quant_point)
        if tape is not None:
            tape.record(prefix, "batchnorm", training=self.training, eps=eps, out_mask=mask, **cache)
        return out

    def layer(self, layer: LayerSpec, h: Tensor, stack: List[Tensor]) -> Tensor:
        p = layer.params
        kind = layer.kind
        tape = self.tape
        if kind == LayerKind.CONV:
            return self.conv(layer.name, h, p["stride"], p["padding"], layer.quant_point, tape)
        if kind == LayerKind.BATCHNORM:
            return self.bn(layer.name, h, p["eps"], layer.quant_point, tape)
        if kind == LayerKind.RELU:
            out, mask = self.act(relu(h), layer.quant_point)
            if tape is not None:
                tape.record(layer.name, "relu", x=h, out_mask=mask)
            return out
        if kind == LayerKind.MAXPOOL:
            out, mask = self.act(maxpool2d(h, p["window"], p["stride"]), layer.quant_point)
            if tape is not None:
                tape.record(layer.name, "maxpool", x=h, window=p["window"], stride=p["stride"], out_mask=mask)
            return out
        if kind == LayerKind.GLOBAL_AVGPOOL:
            out, mask = self.act(global_avgpool(h), layer.quant_point)
            if tape is not None:
                tape.record(layer.name, "global_avgpool", input_shape=h.shape, out_mask=mask)
            return out
        if kind == LayerKind.RESIDUAL_BEGIN:
            stack.append(h)
            if tape is not None:
                tape.record(layer.name, "residual_begin")
            return h
        if kind == LayerKind.RESIDUAL_ADD:
            return self.residual_add(layer, h, stack.pop())
        raise ValueError(f"Unknown layer kind {kind}")

    def residual_add(self, layer: LayerSpec, h: Tensor, shortcut_in: Tensor) -> Tensor:
        sc = layer.params.get("shortcut")
        sub_tape = GradientTape() if self.tape is not None else None
        shortcut = shortcut_in
        if sc:
            shortcut = self.conv(f"{layer.name}.conv", shortcut_in, sc["stride"], 0, layer.quant_point, sub_tape)
            if sc.get("batchnorm", True):
                shortcut = self.bn(f"{layer.name}.bn", shortcut, sc.get("eps", 1e-5), layer.quant_point, sub_tape)
        if shortcut.shape != h.shape:
            raise ShapeMismatchError("residual_add", "shape", h.shape, shortcut.shape)
        out, mask = self.act(h + shortcut, layer.quant_point)
        if self.tape is not None:
            self.tape.record(layer.name, "residual_add", shortcut=sub_tape.entries, out_mask=mask)
        return out

    def run(self, x: Tensor) -> Tensor:
        model = self.model
        if x.ndim != 4:
            raise ShapeMismatchError("forward", "input.ndim", 4, x.ndim)
        if x.shape[1] != model.input_channels:
            raise ShapeMismatchError("forward", "channels", model.input_channels, x.shape[1])
        h, mask = self.act(np.asarray(x, dtype=np.float64))
        if self.tape is not None:
            self.tape.record("input", "input", out_mask=mask)
        stack: List[Tensor] = []
        for layer in model.layers:
            h = check_finite(self.layer(layer, h, stack), f"layer '{layer.name}'")
            if self.trace is not None:
                self.trace.append((layer.name, layer.kind.value, h))
        if h.shape[1:] != (model.feature_dim,):
            raise ShapeMismatchError("forward", "feature_dim", model.feature_dim, h.shape[1:])
        return h


def forward(model: BackboneModel, x: Tensor, quant: Optional[QuantConfig] = None,
            training: bool = False, tape: Optional[GradientTape] = None,
            update_stats: bool = True) -> Tensor:
    """
    Feature vectors [batch, feature_dim].

    Args:
        model: Backbone to run
        x: Input batch [N, C, H, W]
        quant: None (or a disabled config) for the float path
        training: Batch statistics in batch-norm layers
        tape: Records what backward() needs
        update_stats: In training mode, update running statistics (momentum 0.1)
    """
    return _Pass(model, quant, training, update_stats, tape, None).run(x)


def trace_forward(model: BackboneModel, x: Tensor,
                  quant: Optional[QuantConfig] = None) -> List[Tuple[str, str, Tensor]]:
    """Inference forward returning (layer name, kind, output) for every layer."""
    trace: list = []
    _Pass(model, quant, False, False, None, trace).run(x)
    return trace


# ============= BACKWARD =============

def _accumulate(grads: Dict[str, Tensor], name: str, value: Tensor) -> None:
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


def _backward_entry(model: BackboneModel, entry: TapeEntry, g: Tensor,
                    grads: Dict[str, Tensor], stack: List[Tensor]) -> Tensor:
    c = entry.cache
    if c.get("out_mask") is not None:
        g = g * c["out_mask"]

    if entry.kind == "conv":
        dx, dw, db = autograd.conv2d_backward(g, c["x"], c["weights"], c["stride"], c["padding"])
        if c["weight_mask"] is not None:
            dw = dw * c["weight_mask"]
        _accumulate(grads, f"{entry.name}.weight", dw)
        if c["has_bias"]:
            if c["bias_mask"] is not None:
                db = db * c["bias_mask"]
            _accumulate(grads, f"{entry.name}.bias", db)
        return dx
    if entry.kind == "batchnorm":
        gamma = model.weights[f"{entry.name}.weight"]
        if c["training"]:
            dx, dgamma, dbeta = autograd.batchnorm_train_backward(g, c, gamma)
        else:
            dx, dgamma, dbeta = autograd.batchnorm_eval_backward(
                g, c["x"], gamma, model.weights[f"{entry.name}.running_mean"],
                model.weights[f"{entry.name}.running_var"], c["eps"],
            )
        _accumulate(grads, f"{entry.name}.weight", dgamma)
        _accumulate(grads, f"{entry.name}.bias", dbeta)
        return dx
    if entry.kind == "relu":
        return autograd.relu_backward(g, c["x"])
    if entry.kind == "maxpool":
        return autograd.maxpool2d_backward(g, c["x"], c["window"], c["stride"])
    if entry.kind == "global_avgpool":
        return autograd.global_avgpool_backward(g, c["input_shape"])
    if entry.kind == "residual_add":
        g_shortcut = g
        for sub in reversed(c["shortcut"]):
            g_shortcut = _backward_entry(model, sub, g_shortcut, grads, stack)
        stack.append(g_shortcut)
        return g
    if entry.kind == "residual_begin":
        return g + stack.pop()
    if entry.kind == "input":
        return g
    raise ValueError(f"Unknown tape entry kind {entry.kind}")


def backward(model: BackboneModel, tape: GradientTape, grad_features: Tensor) -> Tuple[Dict[str, Tensor], Tensor]:
    """
    Gradients of the loss with respect to every trainable weight and the input.

    Returns:
        (gradients by weight name, gradient w.r.t. the input batch)
    """
    grads: Dict[str, Tensor] = {}
    stack: List[Tensor] = []
    g = grad_features
    for entry in tape.reversed():
        g = _backward_entry(model, entry, g, grads, stack)
    return grads, g
