"""Labeled image container shared by the dataset loaders."""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from core.exceptions import DatasetError


@dataclass
class LabeledImages:
    """Images [N, C, H, W] with values in [0, 1] and integer labels [N]."""
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DatasetError(f"images must be [N, C, H, W], got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DatasetError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def channels(self) -> int:
        return self.images.shape[1]

    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, classes: Sequence[int], relabel: bool = False) -> "LabeledImages":
        """
        Samples of the given classes, in original order. With relabel the
        classes are renumbered 0..len(classes)-1 in the given order.
        """
        classes = list(classes)
        keep = np.isin(self.labels, classes)
        labels = self.labels[keep]
        if relabel:
            lookup = {c: i for i, c in enumerate(classes)}
            labels = np.array([lookup[int(c)] for c in labels], dtype=np.int64)
        return LabeledImages(images=self.images[keep], labels=labels)


def split_classes(data: LabeledImages, base_classes: int) -> Tuple[LabeledImages, LabeledImages]:
    """
    Backbone-training classes (the first base_classes labels, renumbered from 0)
    and the disjoint novel classes used for few-shot episodes.
    """
    classes = [int(c) for c in data.classes()]
    if not 0 < base_classes < len(classes):
        raise DatasetError(f"cannot split {len(classes)} classes into {base_classes} base + novel")
    base = data.subset(classes[:base_classes], relabel=True)
    novel = data.subset(classes[base_classes:], relabel=True)
    return base, novel
