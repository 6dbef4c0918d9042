"""
ResNet-style backbones: declarative graph, builders and forward/backward passes.
"""

from modules.backbone.graph import BackboneModel, LayerKind, LayerSpec, check_store
from modules.backbone.builders import build_arch, build_backbone, build_resnet12, build_resnet_lite
from modules.backbone.network import backward, forward, trace_forward
from modules.backbone.folding import fold_batchnorm_model

__all__ = [
    'BackboneModel',
    'LayerKind',
    'LayerSpec',
    'check_store',
    'build_arch',
    'build_backbone',
    'build_resnet12',
    'build_resnet_lite',
    'forward',
    'backward',
    'trace_forward',
    'fold_batchnorm_model',
]
