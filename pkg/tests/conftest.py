"""Shared fixtures: a small synthetic dataset and a small backbone."""
import numpy as np
import pytest

from modules.backbone import build_backbone
from modules.data import SyntheticDatasetSpec, generate_synthetic, split_classes
from modules.fewshot import sample_episodes


@pytest.fixture(scope="session")
def tiny_split():
    """8x8 gratings, 3 base classes and 5 novel classes of 12 samples."""
    data = generate_synthetic(SyntheticDatasetSpec(num_classes=8, samples_per_class=12, image_size=8, seed=0))
    return split_classes(data, 3)


@pytest.fixture
def tiny_model():
    return build_backbone("tiny", 1, [4, 8], seed=0)


@pytest.fixture(scope="session")
def tiny_plans(tiny_split):
    _, novel = tiny_split
    return sample_episodes(novel.labels, ways=5, shots=1, queries=5, count=20, seed=0)


def perturb_batchnorm(model, seed=1):
    """Non-trivial running statistics and affine parameters."""
    rng = np.random.default_rng(seed)
    for name, value in model.weights.items():
        if ".bn" not in name:
            continue
        if name.endswith((".running_var", ".weight")):
            model.weights[name] = rng.uniform(0.5, 1.5, size=value.shape)
        else:
            model.weights[name] = rng.normal(scale=0.2, size=value.shape)
    return model


@pytest.fixture
def bn_model(tiny_model):
    return perturb_batchnorm(tiny_model)
