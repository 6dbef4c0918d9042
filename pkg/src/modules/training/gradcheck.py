"""
Finite-difference gradient checking for float-mode backbones.

Batch-norm runs with batch statistics (running statistics frozen), exactly as
in a training step. A sampled weight entry whose central difference crosses a
ReLU kink or changes a max-pool winner is not smooth there and is skipped.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from modules.backbone import BackboneModel, backward, forward
from modules.nn.autograd import GradientTape, linear_backward, softmax_cross_entropy
from modules.nn.ops import linear, pool_windows
from modules.training.trainer import HEAD_BIAS, HEAD_WEIGHT


REL_ERROR_FLOOR = 1e-5


@dataclass
class GradCheckReport:
    per_tensor: Dict[str, float] = field(default_factory=dict)
    per_layer: Dict[str, float] = field(default_factory=dict)
    checked: int = 0
    skipped: int = 0

    @property
    def max_error(self) -> float:
        return max(self.per_tensor.values(), default=0.0)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_ERROR_FLOOR)


class _Objective:
    """Scalar loss of a backbone: head cross-entropy, or a fixed random projection of the features."""

    def __init__(self, model: BackboneModel, x: np.ndarray, labels: Optional[np.ndarray],
                 head: Optional[Dict[str, np.ndarray]], seed: int):
        self.model = model
        self.x = x
        self.labels = labels
        self.head = head
        self.projection = None
        if head is None:
            rng = np.random.default_rng(seed)
            self.projection = rng.standard_normal((x.shape[0], model.feature_dim))

    def run(self, tape: GradientTape) -> Tuple[float, np.ndarray]:
        """Loss and its gradient w.r.t. the features."""
        features = forward(self.model, self.x, training=True, tape=tape, update_stats=False)
        if self.head is None:
            return float(np.sum(features * self.projection)), self.projection
        logits = linear(features, self.head[HEAD_WEIGHT], self.head[HEAD_BIAS])
        loss, dlogits, _ = softmax_cross_entropy(logits, self.labels)
        dfeatures, _, _ = linear_backward(dlogits, features, self.head[HEAD_WEIGHT])
        return loss, dfeatures


def _pattern(tape: GradientTape) -> List[np.ndarray]:
    """Which ReLU inputs are positive and which max-pool elements win."""
    pattern = []
    for entry in tape.entries:
        c = entry.cache
        if entry.kind == "relu":
            pattern.append(c["x"] > 0)
        elif entry.kind == "maxpool":
            pattern.append(pool_windows(c["x"], c["window"], c["stride"], "maxpool2d").argmax(axis=-1))
    return pattern


def _same(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def _layer_of(name: str) -> str:
    return name.rsplit(".", 1)[0]


def grad_check(model: BackboneModel, x: np.ndarray, epsilon: float = 1e-4,
               labels: Optional[np.ndarray] = None, head: Optional[Dict[str, np.ndarray]] = None,
               max_checks_per_tensor: int = 6, seed: int = 0) -> GradCheckReport:
    """
    Compare analytic weight gradients with central differences.

    Args:
        model: Backbone (not modified)
        x: Input batch
        epsilon: Finite-difference step
        labels, head: Cross-entropy objective; without them a fixed random
            projection of the features is the loss
        max_checks_per_tensor: Entries sampled per tensor
        seed: Entry sampling and projection seed

    Returns:
        GradCheckReport with max relative error per tensor and per layer
    """
    model = model.copy()
    objective = _Objective(model, np.asarray(x, dtype=np.float64), labels, head, seed)
    tape = GradientTape()
    _, dfeatures = objective.run(tape)
    grads, _ = backward(model, tape, dfeatures)
    base_pattern = _pattern(tape)

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    per_layer = defaultdict(float)
    for name in model.trainable_names():
        w = model.weights[name]
        count = min(max_checks_per_tensor, w.size)
        worst = 0.0
        for flat in rng.choice(w.size, size=count, replace=False):
            idx = np.unravel_index(flat, w.shape)
            original = w[idx]
            w[idx] = original + epsilon
            plus_tape = GradientTape()
            plus, _ = objective.run(plus_tape)
            w[idx] = original - epsilon
            minus_tape = GradientTape()
            minus, _ = objective.run(minus_tape)
            w[idx] = original
            if not (_same(base_pattern, _pattern(plus_tape)) and _same(base_pattern, _pattern(minus_tape))):
                report.skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * epsilon)
            worst = max(worst, relative_error(float(grads[name][idx]), numeric))
            report.checked += 1
        report.per_tensor[name] = worst
        per_layer[_layer_of(name)] = max(per_layer[_layer_of(name)], worst)

    report.per_layer = dict(per_layer)
    return report
