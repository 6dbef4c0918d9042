"""
Neural-network operators (float and fake-quantized) and their reverse-mode rules.
"""

from modules.nn.ops import (
    Tensor,
    QuantConfig,
    ConvParams,
    BatchNormParams,
    conv2d,
    conv2d_quant,
    relu,
    relu_quant,
    maxpool2d,
    global_avgpool,
    batchnorm,
    batchnorm_fold,
    quantize_tensor,
    residual_add,
    linear,
)
from modules.nn.autograd import GradientTape, ste_backward, softmax_cross_entropy

__all__ = [
    'Tensor',
    'QuantConfig',
    'ConvParams',
    'BatchNormParams',
    'conv2d',
    'conv2d_quant',
    'relu',
    'relu_quant',
    'maxpool2d',
    'global_avgpool',
    'batchnorm',
    'batchnorm_fold',
    'quantize_tensor',
    'residual_add',
    'linear',
    'GradientTape',
    'ste_backward',
    'softmax_cross_entropy',
]
