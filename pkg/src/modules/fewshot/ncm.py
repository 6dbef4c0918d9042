"""
Nearest class mean classifier.

Class centers are support means; a query goes to the nearest center in
Euclidean distance, ties to the lowest class index. The quantized variant
rounds support vectors, centers, queries and query-center differences to the
activation grid; squares and their sum stay exact.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.exceptions import EmptyClassError, ShapeMismatchError
from modules.fewshot.episodes import Episode
from modules.fixedpoint import QFormat, quantize_array


@dataclass(frozen=True)
class ClassCenters:
    centers: np.ndarray  # [n, d]

    @property
    def ways(self) -> int:
        return self.centers.shape[0]


def _q(x: np.ndarray, quant: Optional[QFormat]) -> np.ndarray:
    return x if quant is None else quantize_array(x, quant)


def class_means(episode: Episode, quant: Optional[QFormat] = None) -> ClassCenters:
    support = episode.support
    if support.shape[1] == 0:
        raise EmptyClassError(f"class_means: {support.shape[0]} support classes have no samples")
    centers = _q(_q(support, quant).mean(axis=1), quant)
    return ClassCenters(centers=centers)


def squared_distances(z: np.ndarray, centers: ClassCenters, quant: Optional[QFormat] = None) -> np.ndarray:
    """[m, n] squared distances from queries [m, d] to every center."""
    if z.shape[-1] != centers.centers.shape[1]:
        raise ShapeMismatchError("classify", "feature_dim", centers.centers.shape[1], z.shape[-1])
    diff = _q(_q(z, quant)[:, None, :] - centers.centers[None, :, :], quant)
    return np.einsum("mnd,mnd->mn", diff, diff)


def classify_batch(z: np.ndarray, centers: ClassCenters, quant: Optional[QFormat] = None) -> np.ndarray:
    # argmin returns the first minimum, i.e. the lowest class index on ties
    return squared_distances(np.atleast_2d(z), centers, quant).argmin(axis=1)


def classify(z: np.ndarray, centers: ClassCenters, quant: Optional[QFormat] = None) -> int:
    return int(classify_batch(np.asarray(z, dtype=np.float64)[None, :], centers, quant)[0])
