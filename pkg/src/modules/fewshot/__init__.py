"""
Episodic few-shot evaluation with a nearest class mean classifier.
"""

from modules.fewshot.episodes import Episode, EpisodePlan, sample_episodes
from modules.fewshot.ncm import ClassCenters, class_means, classify, classify_batch
from modules.fewshot.evaluator import (
    accuracy_stat,
    evaluate,
    evaluate_episodes,
    extract_features,
)

__all__ = [
    'Episode',
    'EpisodePlan',
    'sample_episodes',
    'ClassCenters',
    'class_means',
    'classify',
    'classify_batch',
    'accuracy_stat',
    'evaluate',
    'evaluate_episodes',
    'extract_features',
]
