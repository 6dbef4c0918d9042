"""
Persistence and data: weight files, synthetic gratings and raw dataset directories.
"""

from modules.data.datasets import LabeledImages, split_classes
from modules.data.weight_file import load_weights, read_weights, save_weights, sha256_hex, write_weights
from modules.data.synthetic import SyntheticDatasetSpec, generate_synthetic
from modules.data.cifar_like import export_cifar_like, load_cifar_like

__all__ = [
    'LabeledImages',
    'split_classes',
    'save_weights',
    'load_weights',
    'write_weights',
    'read_weights',
    'sha256_hex',
    'SyntheticDatasetSpec',
    'generate_synthetic',
    'load_cifar_like',
    'export_cifar_like',
]
