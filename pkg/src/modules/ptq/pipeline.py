"""
Post-Training Quantization Pipeline

Six steps, in order:
    1. load the float model and its weights
    2. instantiate the fixed-point model
    3. transfer weights (fold batch-norm, quantize)
    4. extract base-class features with the fixed-point model and average them
    5. standardize evaluation features with that average vector
    6. few-shot accuracy with the nearest class mean classifier

The same feature pipeline (steps 4 to 6) evaluates float and QAT models, so
every row of a sweep is measured the same way.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import DataError, ShapeMismatchError
from models.schemas import AccuracyStat, PtqSidecar
from modules.backbone import BackboneModel
from modules.data.weight_file import write_weights
from modules.fewshot import EpisodePlan, evaluate, extract_features
from modules.fewshot.evaluator import ncm_format
from modules.fixedpoint import QFormat, quantize_array
from modules.nn.ops import QuantConfig
from modules.ptq.transfer import weight_transfer
from utils.logger import logger


PREPROCESS_MODES = ("center_normalize", "center_only", "none")

WEIGHTS_FILE = "ptq_weights.qfxw"
SIDECAR_FILE = "ptq_weights.json"


def standardize(features: np.ndarray, mean_vector: np.ndarray, mode: str = "center_normalize",
                quant: Optional[QFormat] = None) -> np.ndarray:
    """
    Subtract the average vector, then L2-normalize each row.

    A row that is zero after centering is passed through centered only, with
    a warning. With quant, the centered and the normalized values are
    rounded to its grid.
    """
    if mode not in PREPROCESS_MODES:
        raise ValueError(f"Unknown preprocess mode '{mode}'")
    if mode == "none":
        return features
    if features.shape[-1] != mean_vector.shape[-1]:
        raise ShapeMismatchError("standardize", "feature_dim", mean_vector.shape[-1], features.shape[-1])

    centered = features - mean_vector[None, :]
    if quant is not None:
        centered = quantize_array(centered, quant)
    if mode == "center_only":
        return centered

    norms = np.linalg.norm(centered, axis=1)
    zero = norms == 0
    if np.any(zero):
        logger.warning(f"[WARN] {int(zero.sum())} feature rows are zero after centering; left unnormalized")
    out = centered / np.where(zero, 1.0, norms)[:, None]
    if quant is not None:
        out = quantize_array(out, quant)
    return out


def compute_mean_vector(features: np.ndarray, quant: Optional[QFormat] = None) -> np.ndarray:
    if len(features) == 0:
        raise DataError("cannot compute the average vector of an empty base set")
    mean = features.mean(axis=0)
    return mean if quant is None else quantize_array(mean, quant)


def evaluate_pipeline(model: BackboneModel, quant: Optional[QuantConfig], base_images: np.ndarray,
                      plans: Sequence[EpisodePlan], eval_images: np.ndarray,
                      preprocess: str = "center_normalize") -> Tuple[np.ndarray, AccuracyStat]:
    """
    Steps 4 to 6 for any backbone.

    Returns:
        (mean_vector, accuracy)
    """
    fmt = ncm_format(quant)
    base_features = extract_features(model, base_images, quant)
    mean_vector = compute_mean_vector(base_features, fmt)
    logger.info(f"[PTQ] Average vector over {len(base_features)} base samples")
    accuracy = evaluate(
        plans, model, eval_images, quant,
        preprocess=lambda f: standardize(f, mean_vector, preprocess, fmt),
    )
    return mean_vector, accuracy


@dataclass
class PtqArtifacts:
    quantized_model: BackboneModel
    mean_vector: np.ndarray
    quant: QuantConfig
    preprocess: str = "center_normalize"
    source_sha256: Optional[str] = None
    transfer_errors: Dict[str, float] = field(default_factory=dict)

    def sidecar(self) -> PtqSidecar:
        return PtqSidecar(
            weight_format=str(self.quant.weight_format),
            activation_format=str(self.quant.activation_format),
            enabled=self.quant.enabled,
            mean_vector=[float(v) for v in self.mean_vector],
            preprocess=self.preprocess,
            source_sha256=self.source_sha256,
            transfer_max_error=dict(sorted(self.transfer_errors.items())),
        )

    def save(self, directory: str) -> Dict[str, str]:
        """Weight file (grid values as float32) plus JSON sidecar."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        weights_path = out / WEIGHTS_FILE
        sidecar_path = out / SIDECAR_FILE
        write_weights(str(weights_path), self.quantized_model.weights)
        sidecar_path.write_text(json.dumps(self.sidecar().model_dump(), indent=2, sort_keys=True))
        logger.info(f"[PTQ] Saved artifacts to {out}")
        return {"weights": str(weights_path), "sidecar": str(sidecar_path)}


def run_ptq(float_weights: Mapping[str, np.ndarray], arch: BackboneModel, qc: QuantConfig,
            base_images: np.ndarray, plans: Sequence[EpisodePlan], eval_images: np.ndarray,
            preprocess: str = "center_normalize",
            source_sha256: Optional[str] = None) -> Tuple[PtqArtifacts, AccuracyStat]:
    """
    Run the six PTQ steps.

    A disabled qc gives the float pipeline: same folding, no rounding.

    Raises:
        WeightMismatchError: step 3, weight names or shapes do not match arch
        DataError: step 4, empty base set
    """
    label = str(qc.weight_format) if qc.enabled else "float"
    logger.info(f"[PTQ] Step 1/6: float model '{arch.arch}' with {len(float_weights)} tensors")
    logger.info(f"[PTQ] Steps 2-3/6: fixed-point model at {label}, weight transfer")
    quantized, errors = weight_transfer(float_weights, arch, qc)
    logger.info("[PTQ] Steps 4-6/6: average vector, standardization, NCM evaluation")
    mean_vector, accuracy = evaluate_pipeline(quantized, qc, base_images, plans, eval_images, preprocess)

    artifacts = PtqArtifacts(
        quantized_model=quantized,
        mean_vector=mean_vector,
        quant=qc,
        preprocess=preprocess,
        source_sha256=source_sha256,
        transfer_errors=errors,
    )
    logger.info(f"[SUCCESS] PTQ {label}: {accuracy.formatted()}")
    return artifacts, accuracy
