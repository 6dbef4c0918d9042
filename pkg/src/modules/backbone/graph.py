"""
Backbone Graph Module

Declarative description of a ResNet-style backbone: an ordered list of
LayerSpecs plus a named weight store. Weight names follow
"block{b}.conv{c}.weight", "block{b}.bn{c}.running_mean",
"block{b}.shortcut.conv.weight" and are shared with weight files.
"""
import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

from core.exceptions import ConfigError, WeightMismatchError
from modules.nn.ops import BatchNormParams, ConvParams


BN_BUFFERS = ("running_mean", "running_var")


class LayerKind(str, Enum):
    CONV = "conv"
    BATCHNORM = "batchnorm"
    RELU = "relu"
    MAXPOOL = "maxpool"
    RESIDUAL_BEGIN = "residual_begin"
    RESIDUAL_ADD = "residual_add"
    GLOBAL_AVGPOOL = "global_avgpool"


@dataclass(frozen=True)
class LayerSpec:
    """
    One step of the sequential program.

    params per kind:
        conv: in_channels, out_channels, kernel, stride, padding, bias
        batchnorm: channels, eps
        maxpool: window, stride
        residual_add: shortcut (None for identity, otherwise in_channels,
            out_channels, stride, batchnorm, bias)

    quant_point marks layers whose output is rounded to the activation grid
    when the forward pass runs with an enabled QuantConfig.
    """
    kind: LayerKind
    name: str
    params: Dict[str, Any] = field(default_factory=dict)
    quant_point: bool = True


def conv_shapes(prefix: str, in_ch: int, out_ch: int, kernel: int, bias: bool) -> Dict[str, Tuple[int, ...]]:
    shapes = {f"{prefix}.weight": (out_ch, in_ch, kernel, kernel)}
    if bias:
        shapes[f"{prefix}.bias"] = (out_ch,)
    return shapes


def bn_shapes(prefix: str, channels: int) -> Dict[str, Tuple[int, ...]]:
    return {f"{prefix}.{suffix}": (channels,) for suffix in ("weight", "bias") + BN_BUFFERS}


def shortcut_shapes(layer: LayerSpec) -> Dict[str, Tuple[int, ...]]:
    sc = layer.params.get("shortcut")
    if not sc:
        return {}
    shapes = conv_shapes(f"{layer.name}.conv", sc["in_channels"], sc["out_channels"], 1, sc.get("bias", False))
    if sc.get("batchnorm", True):
        shapes.update(bn_shapes(f"{layer.name}.bn", sc["out_channels"]))
    return shapes


@dataclass
class BackboneModel:
    """
    Layers, weights and the output feature dimension.

    Weights are read-only during forward passes; training mutates them in
    place and needs exclusive access.
    """
    arch: str
    layers: List[LayerSpec]
    weights: Dict[str, np.ndarray]
    feature_dim: int
    input_channels: int

    # ============= STRUCTURE =============

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Every tensor name the layers need, with its shape."""
        shapes: Dict[str, Tuple[int, ...]] = {}
        for layer in self.layers:
            p = layer.params
            if layer.kind == LayerKind.CONV:
                shapes.update(conv_shapes(layer.name, p["in_channels"], p["out_channels"], p["kernel"], p.get("bias", False)))
            elif layer.kind == LayerKind.BATCHNORM:
                shapes.update(bn_shapes(layer.name, p["channels"]))
            elif layer.kind == LayerKind.RESIDUAL_ADD:
                shapes.update(shortcut_shapes(layer))
        return shapes

    def validate_structure(self) -> None:
        """Balanced residual pairs and exactly one terminal global average pool."""
        depth = 0
        for index, layer in enumerate(self.layers):
            if layer.kind == LayerKind.RESIDUAL_BEGIN:
                depth += 1
            elif layer.kind == LayerKind.RESIDUAL_ADD:
                depth -= 1
                if depth < 0:
                    raise ConfigError(f"residual_add '{layer.name}' without residual_begin", field="layers")
            elif layer.kind == LayerKind.GLOBAL_AVGPOOL and index != len(self.layers) - 1:
                raise ConfigError("global_avgpool must be the last layer", field="layers")
        if depth != 0:
            raise ConfigError("unbalanced residual_begin/residual_add", field="layers")
        pools = [l for l in self.layers if l.kind == LayerKind.GLOBAL_AVGPOOL]
        if len(pools) != 1:
            raise ConfigError(f"expected one global_avgpool, found {len(pools)}", field="layers")

    def validate_weights(self) -> None:
        """Raises WeightMismatchError listing every missing, extra and mis-shaped tensor."""
        check_store(self.weights, self.expected_shapes())

    # ============= ACCESS =============

    def conv_params(self, prefix: str, stride: int, padding: int) -> ConvParams:
        return ConvParams(
            weights=self.weights[f"{prefix}.weight"],
            bias=self.weights.get(f"{prefix}.bias"),
            stride=stride,
            padding=padding,
        )

    def bn_params(self, prefix: str, eps: float) -> BatchNormParams:
        return BatchNormParams(
            gamma=self.weights[f"{prefix}.weight"],
            beta=self.weights[f"{prefix}.bias"],
            running_mean=self.weights[f"{prefix}.running_mean"],
            running_var=self.weights[f"{prefix}.running_var"],
            eps=eps,
        )

    def trainable_names(self) -> List[str]:
        return [name for name in self.weights if not name.endswith(BN_BUFFERS)]

    def conv_layers(self) -> Iterator[LayerSpec]:
        return (layer for layer in self.layers if layer.kind == LayerKind.CONV)

    def count_parameters(self) -> int:
        """Trainable scalar count (running statistics excluded)."""
        return int(sum(self.weights[name].size for name in self.trainable_names()))

    def copy(self) -> "BackboneModel":
        return BackboneModel(
            arch=self.arch,
            layers=list(self.layers),
            weights={name: value.copy() for name, value in self.weights.items()},
            feature_dim=self.feature_dim,
            input_channels=self.input_channels,
        )

    def with_weights(self, weights: Dict[str, np.ndarray]) -> "BackboneModel":
        """Same architecture with another weight store (validated)."""
        model = BackboneModel(
            arch=self.arch,
            layers=copy.deepcopy(self.layers),
            weights={name: np.asarray(value, dtype=np.float64) for name, value in weights.items()},
            feature_dim=self.feature_dim,
            input_channels=self.input_channels,
        )
        model.validate_weights()
        return model


def check_store(store: Dict[str, np.ndarray], expected: Dict[str, Tuple[int, ...]]) -> None:
    missing = [name for name in expected if name not in store]
    extra = [name for name in store if name not in expected]
    mismatched = [
        f"{name} {tuple(store[name].shape)} != {shape}"
        for name, shape in expected.items()
        if name in store and tuple(store[name].shape) != tuple(shape)
    ]
    if missing or extra or mismatched:
        raise WeightMismatchError(missing, extra, mismatched)
