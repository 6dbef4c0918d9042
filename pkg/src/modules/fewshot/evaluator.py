"""
Episodic evaluation: backbone features, NCM per episode, accuracy with a
95% normal-approximation confidence interval.
"""
from typing import Callable, List, Optional, Sequence

import numpy as np

from core.config import settings
from core.exceptions import ConfigError
from models.schemas import AccuracyStat
from modules.backbone import BackboneModel, forward
from modules.fewshot.episodes import Episode, EpisodePlan
from modules.fewshot.ncm import class_means, classify_batch
from modules.fixedpoint import QFormat
from modules.nn.ops import QuantConfig
from utils.logger import logger


Preprocess = Callable[[np.ndarray], np.ndarray]

CI_Z = 1.96


def accuracy_stat(per_episode: Sequence[float], runs: int = 1) -> AccuracyStat:
    """
    Mean and 95% half-width (1.96 * sample std / sqrt(E)) of per-episode
    accuracies given as fractions; reported in percent.
    """
    acc = np.asarray(per_episode, dtype=np.float64) * 100.0
    if acc.size == 0:
        raise ConfigError("no episodes to evaluate", field="episodes")
    half_width = 0.0
    if acc.size > 1:
        half_width = float(CI_Z * acc.std(ddof=1) / np.sqrt(acc.size))
    return AccuracyStat(mean=float(acc.mean()), half_width=half_width, episodes=int(acc.size), runs=runs)


def episode_accuracy(episode: Episode, quant: Optional[QFormat] = None) -> float:
    centers = class_means(episode, quant)
    predictions = classify_batch(episode.queries, centers, quant)
    return float(np.mean(predictions == episode.query_labels))


def evaluate_episodes(episodes: Sequence[Episode], quant: Optional[QFormat] = None) -> AccuracyStat:
    """NCM accuracy over already-materialized episodes, in stream order."""
    return accuracy_stat([episode_accuracy(e, quant) for e in episodes])


def extract_features(model: BackboneModel, images: np.ndarray, quant: Optional[QuantConfig] = None,
                     batch_size: Optional[int] = None) -> np.ndarray:
    """Inference-mode features [N, feature_dim], computed in fixed-size chunks in order."""
    batch_size = batch_size or settings.FEATURE_BATCH_SIZE
    chunks: List[np.ndarray] = [
        forward(model, images[start:start + batch_size], quant=quant)
        for start in range(0, len(images), batch_size)
    ]
    if not chunks:
        return np.zeros((0, model.feature_dim))
    return np.concatenate(chunks)


def ncm_format(quant: Optional[QuantConfig]) -> Optional[QFormat]:
    """Grid the classifier works on: the activation format when quantization is on."""
    if quant is None or not quant.enabled:
        return None
    return quant.activation_format


def evaluate(plans: Sequence[EpisodePlan], model: BackboneModel, images: np.ndarray,
             quant: Optional[QuantConfig] = None, preprocess: Optional[Preprocess] = None,
             features: Optional[np.ndarray] = None) -> AccuracyStat:
    """
    Few-shot accuracy of a backbone over an episode stream.

    Args:
        plans: Episode index plans over the images
        model: Backbone (float or to be run fake-quantized)
        images: Evaluation pool [N, C, H, W]
        quant: Enabled QuantConfig for the quantized pipeline
        preprocess: Feature transform applied before NCM (e.g. standardization)
        features: Precomputed pool features; skips extraction

    Returns:
        AccuracyStat over the stream
    """
    if not plans:
        raise ConfigError("episode stream is empty", field="episodes")
    if features is None:
        features = extract_features(model, images, quant)
    if preprocess is not None:
        features = preprocess(features)

    fmt = ncm_format(quant)
    stat = accuracy_stat([episode_accuracy(plan.bind(features), fmt) for plan in plans])
    logger.info(
        f"[EVAL] {len(plans)} episodes, {'float' if fmt is None else fmt}: {stat.formatted()}"
    )
    return stat
