"""
Weight transfer from a float checkpoint into the fixed-point model.
"""
from typing import Dict, Mapping, Tuple

import numpy as np

from modules.backbone import BackboneModel, check_store, fold_batchnorm_model
from modules.nn.ops import QuantConfig
from utils.logger import logger


def quantize_store(model: BackboneModel, qc: QuantConfig) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
    """
    Conv weights onto the weight grid, biases onto the activation grid (the
    grid conv outputs are accumulated on).

    Returns:
        (quantized store, max absolute quantization error per tensor)
    """
    store: Dict[str, np.ndarray] = {}
    errors: Dict[str, float] = {}
    for name, value in model.weights.items():
        if not qc.enabled:
            quantized = value.copy()
        elif value.ndim == 4:
            quantized = qc.weight(value)
        else:
            quantized = qc.act(value)
        store[name] = quantized
        errors[name] = float(np.max(np.abs(quantized - value))) if value.size else 0.0
    return store, errors


def weight_transfer(float_store: Mapping[str, np.ndarray], arch: BackboneModel,
                    qc: QuantConfig) -> Tuple[BackboneModel, Dict[str, float]]:
    """
    Fold batch-norm, then quantize every tensor.

    Args:
        float_store: Float weights by name
        arch: Architecture the weights belong to (its own weights are ignored)
        qc: Target formats

    Returns:
        (BN-free quantized model, per-tensor max transfer error)

    Raises:
        WeightMismatchError: listing every missing, extra and mis-shaped tensor
    """
    check_store(dict(float_store), arch.expected_shapes())
    folded = fold_batchnorm_model(arch.with_weights(dict(float_store)))
    store, errors = quantize_store(folded, qc)
    folded.weights = store

    worst = max(errors.values(), default=0.0)
    logger.info(
        f"[PTQ] Transferred {len(store)} tensors to {qc.weight_format if qc.enabled else 'float'}; "
        f"max error {worst:.6g}"
    )
    return folded, errors
