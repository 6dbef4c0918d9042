"""Batch-norm folding: a BN-free backbone with identical inference outputs."""
from typing import Dict, List

import numpy as np

from core.exceptions import ConfigError
from modules.backbone.graph import BackboneModel, LayerKind, LayerSpec
from modules.nn.ops import batchnorm_fold


def fold_batchnorm_model(model: BackboneModel) -> BackboneModel:
    """
    Absorb every inference-mode batch-norm into the conv before it, including
    the ones inside projection shortcuts. A folded conv carries a bias and
    takes over the batch-norm's quant point. Models without batch-norm are
    returned as an equivalent copy.
    """
    layers: List[LayerSpec] = []
    weights: Dict[str, np.ndarray] = {}
    for layer in model.layers:
        p = layer.params
        if layer.kind == LayerKind.BATCHNORM:
            prev = layers[-1] if layers else None
            if prev is None or prev.kind != LayerKind.CONV:
                raise ConfigError(f"batch-norm '{layer.name}' does not follow a conv", field="layers")
            folded = batchnorm_fold(
                model.conv_params(prev.name, prev.params["stride"], prev.params["padding"]),
                model.bn_params(layer.name, p["eps"]),
            )
            weights[f"{prev.name}.weight"] = folded.weights
            weights[f"{prev.name}.bias"] = folded.bias
            layers[-1] = LayerSpec(prev.kind, prev.name, {**prev.params, "bias": True}, layer.quant_point)
        elif layer.kind == LayerKind.CONV:
            layers.append(layer)
            weights[f"{layer.name}.weight"] = model.weights[f"{layer.name}.weight"].copy()
            if p.get("bias"):
                weights[f"{layer.name}.bias"] = model.weights[f"{layer.name}.bias"].copy()
        elif layer.kind == LayerKind.RESIDUAL_ADD and p.get("shortcut"):
            sc = p["shortcut"]
            prefix = f"{layer.name}.conv"
            conv = model.conv_params(prefix, sc["stride"], 0)
            if sc.get("batchnorm", True):
                conv = batchnorm_fold(conv, model.bn_params(f"{layer.name}.bn", sc.get("eps", 1e-5)))
            weights[f"{prefix}.weight"] = conv.weights.copy()
            weights[f"{prefix}.bias"] = (conv.bias if conv.bias is not None else np.zeros(conv.out_channels)).copy()
            shortcut = {**sc, "batchnorm": False, "bias": True}
            layers.append(LayerSpec(layer.kind, layer.name, {**p, "shortcut": shortcut}, layer.quant_point))
        else:
            layers.append(layer)

    folded = BackboneModel(
        arch=model.arch,
        layers=layers,
        weights=weights,
        feature_dim=model.feature_dim,
        input_channels=model.input_channels,
    )
    folded.validate_weights()
    return folded
