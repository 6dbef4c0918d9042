"""
Post-training quantization: weight transfer and the six-step pipeline.
"""

from modules.ptq.transfer import quantize_store, weight_transfer
from modules.ptq.pipeline import (
    PtqArtifacts,
    compute_mean_vector,
    evaluate_pipeline,
    run_ptq,
    standardize,
)

__all__ = [
    'quantize_store',
    'weight_transfer',
    'PtqArtifacts',
    'compute_mean_vector',
    'evaluate_pipeline',
    'run_ptq',
    'standardize',
]
