"""
Backbone builders: the twelve-conv ResNet12 and a desk-scale six-conv
ResNet-lite for 32x32 inputs.

Each residual block is
    conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> ReLU -> conv3x3 -> BN
    (+ shortcut) -> ReLU -> maxpool 2x2
with a 1x1 projection conv + BN shortcut when the width changes. The
shortcut lives inside the residual_add LayerSpec, so only the 3x3 convs
count as conv layers.
"""
from typing import Dict, List, Sequence

import numpy as np

from core.exceptions import ConfigError
from modules.backbone.graph import BackboneModel, LayerKind, LayerSpec
from utils.logger import logger
from utils.seeding import rng_for


RESNET12_WIDTH_MULTIPLIERS = (1, 2, 4, 8)
RESNET_LITE_WIDTH_MULTIPLIERS = (1, 2)
BN_EPS = 1e-5


def residual_block_layers(block: int, in_ch: int, out_ch: int, batchnorm: bool = True,
                          pool: bool = True) -> List[LayerSpec]:
    prefix = f"block{block}"
    layers = [LayerSpec(LayerKind.RESIDUAL_BEGIN, f"{prefix}.begin")]
    channels = in_ch
    for c in (1, 2, 3):
        layers.append(LayerSpec(LayerKind.CONV, f"{prefix}.conv{c}", {
            "in_channels": channels, "out_channels": out_ch,
            "kernel": 3, "stride": 1, "padding": 1, "bias": not batchnorm,
        }))
        if batchnorm:
            layers.append(LayerSpec(LayerKind.BATCHNORM, f"{prefix}.bn{c}", {"channels": out_ch, "eps": BN_EPS}))
        if c < 3:
            layers.append(LayerSpec(LayerKind.RELU, f"{prefix}.relu{c}"))
        channels = out_ch

    shortcut = None
    if in_ch != out_ch:
        shortcut = {
            "in_channels": in_ch, "out_channels": out_ch, "stride": 1,
            "batchnorm": batchnorm, "bias": not batchnorm,
        }
    layers.append(LayerSpec(LayerKind.RESIDUAL_ADD, f"{prefix}.shortcut", {"shortcut": shortcut}))
    layers.append(LayerSpec(LayerKind.RELU, f"{prefix}.relu3"))
    if pool:
        layers.append(LayerSpec(LayerKind.MAXPOOL, f"{prefix}.pool", {"window": 2, "stride": 2}))
    return layers


def init_weights(model: BackboneModel, seed: int) -> Dict[str, np.ndarray]:
    """
    Kaiming-normal (fan-in) conv weights, zero biases, identity batch-norm.
    Tensors are drawn in layer order from the run's "init" stream.
    """
    rng = rng_for(seed, "init")
    weights: Dict[str, np.ndarray] = {}
    for name, shape in model.expected_shapes().items():
        if name.endswith(".weight") and len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
            weights[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        elif name.endswith(".weight") or name.endswith(".running_var"):
            weights[name] = np.ones(shape)
        else:
            weights[name] = np.zeros(shape)
    return weights


def build_backbone(arch: str, input_channels: int, widths: Sequence[int], seed: int = 0,
                   batchnorm: bool = True, pool: bool = True) -> BackboneModel:
    if input_channels < 1 or not widths or min(widths) < 1:
        raise ConfigError(f"input_channels and widths must be positive, got {input_channels}, {list(widths)}", field="arch")

    layers: List[LayerSpec] = []
    in_ch = input_channels
    for block, width in enumerate(widths, start=1):
        layers.extend(residual_block_layers(block, in_ch, width, batchnorm=batchnorm, pool=pool))
        in_ch = width
    layers.append(LayerSpec(LayerKind.GLOBAL_AVGPOOL, "gap"))

    model = BackboneModel(
        arch=arch,
        layers=layers,
        weights={},
        feature_dim=widths[-1],
        input_channels=input_channels,
    )
    model.validate_structure()
    model.weights = init_weights(model, seed)
    logger.debug(f"[MODEL] Built {arch}: {len(widths)} blocks, {model.count_parameters()} parameters")
    return model


def build_resnet12(input_channels: int = 3, base_width: int = 64, seed: int = 0) -> BackboneModel:
    """Four blocks of three 3x3 convs, widths [64, 128, 256, 512] by default."""
    widths = [base_width * m for m in RESNET12_WIDTH_MULTIPLIERS]
    return build_backbone("resnet12", input_channels, widths, seed=seed)


def build_resnet_lite(input_channels: int = 1, base_width: int = 16, seed: int = 0) -> BackboneModel:
    """Two blocks of three 3x3 convs, widths [16, 32] by default."""
    widths = [base_width * m for m in RESNET_LITE_WIDTH_MULTIPLIERS]
    return build_backbone("resnet_lite", input_channels, widths, seed=seed)


ARCHITECTURES = {
    "resnet12": build_resnet12,
    "resnet_lite": build_resnet_lite,
}


def build_arch(arch: str, input_channels: int, base_width: int, seed: int = 0) -> BackboneModel:
    if arch not in ARCHITECTURES:
        raise ConfigError(f"Unknown architecture '{arch}', expected one of {sorted(ARCHITECTURES)}", field="arch")
    return ARCHITECTURES[arch](input_channels=input_channels, base_width=base_width, seed=seed)
