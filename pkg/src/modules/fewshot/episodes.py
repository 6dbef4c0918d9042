"""
Episode sampling.

An EpisodePlan holds indices into a sample pool only; binding it to a
feature matrix materializes an Episode. Features are extracted once per
pool and every episode reuses them.
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from core.exceptions import InsufficientSamplesError, ShapeMismatchError
from utils.seeding import rng_for


@dataclass(frozen=True)
class Episode:
    """
    n-way k-shot task over feature vectors.

    support: [n, k, d]; queries: [m, d]; query_labels: [m] in [0, n).
    An empty support set (k = 0) is rejected by class_means.
    """
    support: np.ndarray
    queries: np.ndarray
    query_labels: np.ndarray

    def __post_init__(self):
        if self.support.ndim != 3:
            raise ShapeMismatchError("episode", "support", "[n, k, d]", self.support.shape)
        if self.queries.ndim != 2 or self.queries.shape[1] != self.support.shape[2]:
            raise ShapeMismatchError("episode", "feature_dim", self.support.shape[2], self.queries.shape[1:])
        if len(self.query_labels) != len(self.queries):
            raise ShapeMismatchError("episode", "query_labels", len(self.queries), len(self.query_labels))
        if len(self.query_labels) and (self.query_labels.min() < 0 or self.query_labels.max() >= self.ways):
            raise ShapeMismatchError("episode", "query label range", f"[0, {self.ways})",
                                     (int(self.query_labels.min()), int(self.query_labels.max())))

    @property
    def ways(self) -> int:
        return self.support.shape[0]

    @property
    def shots(self) -> int:
        return self.support.shape[1]


@dataclass(frozen=True)
class EpisodePlan:
    """Pool indices of one episode: support [n, k], queries [m] with labels [m]."""
    classes: np.ndarray
    support_indices: np.ndarray
    query_indices: np.ndarray
    query_labels: np.ndarray

    def bind(self, features: np.ndarray) -> Episode:
        return Episode(
            support=features[self.support_indices],
            queries=features[self.query_indices],
            query_labels=self.query_labels,
        )


def sample_episodes(labels: np.ndarray, ways: int, shots: int, queries: int,
                    count: int, seed: int) -> List[EpisodePlan]:
    """
    Sample a deterministic stream of n-way k-shot episodes over a labeled pool.

    Per episode: `ways` distinct classes, then `shots + queries` distinct samples
    of each, all uniform without replacement. Query labels are positions in the
    episode's class list.

    Raises:
        InsufficientSamplesError: a class has fewer than shots + queries samples
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if ways > len(classes):
        raise InsufficientSamplesError(-1, len(classes), ways)
    per_class = {int(c): np.flatnonzero(labels == c) for c in classes}
    needed = shots + queries
    for c, members in per_class.items():
        if len(members) < needed:
            raise InsufficientSamplesError(c, len(members), needed)

    rng = rng_for(seed, "episodes")
    plans = []
    for _ in range(count):
        chosen = rng.choice(classes, size=ways, replace=False)
        support, query, query_labels = [], [], []
        for position, c in enumerate(chosen):
            picked = rng.choice(per_class[int(c)], size=needed, replace=False)
            support.append(picked[:shots])
            query.append(picked[shots:])
            query_labels.append(np.full(queries, position, dtype=np.int64))
        plans.append(EpisodePlan(
            classes=chosen,
            support_indices=np.stack(support),
            query_indices=np.concatenate(query),
            query_labels=np.concatenate(query_labels),
        ))
    return plans
