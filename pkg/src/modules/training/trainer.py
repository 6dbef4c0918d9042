"""
Backbone training on base classes.

A linear head over the base classes sits on top of the backbone features
during training and is discarded afterwards. In QAT mode every forward pass
is fake-quantized and gradients cross the quantizers through the clipped
straight-through estimator; batch-norm uses float batch statistics.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.exceptions import DatasetError, DivergenceError, ShapeMismatchError
from models.schemas import LossRecord, TrainConfig
from modules.backbone import BackboneModel, backward, forward
from modules.data.datasets import LabeledImages
from modules.nn.autograd import GradientTape, linear_backward, softmax_cross_entropy
from modules.nn.ops import linear
from modules.training.optimizer import SGD
from utils.logger import logger
from utils.seeding import rng_for


HEAD_WEIGHT = "head.weight"
HEAD_BIAS = "head.bias"


def init_head(feature_dim: int, num_classes: int, seed: int = 0) -> Dict[str, np.ndarray]:
    """Linear classifier head: weight [num_classes, feature_dim], zero bias."""
    rng = rng_for(seed, "head")
    bound = 1.0 / np.sqrt(feature_dim)
    return {
        HEAD_WEIGHT: rng.uniform(-bound, bound, size=(num_classes, feature_dim)),
        HEAD_BIAS: np.zeros(num_classes),
    }


@dataclass
class TrainResult:
    model: BackboneModel
    head: Dict[str, np.ndarray]
    history: List[LossRecord] = field(default_factory=list)

    def final_accuracy(self) -> Optional[float]:
        return self.history[-1].train_acc if self.history else None


def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    if not cfg.cosine_lr or cfg.epochs == 0:
        return cfg.learning_rate
    return 0.5 * cfg.learning_rate * (1.0 + np.cos(np.pi * epoch / cfg.epochs))


def train_step(model: BackboneModel, head: Dict[str, np.ndarray], images: np.ndarray, labels: np.ndarray,
               cfg: TrainConfig) -> tuple:
    """
    One forward/backward pass.

    Returns:
        (loss, batch accuracy, gradients by name including the head)
    """
    tape = GradientTape()
    features = forward(model, images, quant=cfg.quant_config(), training=True, tape=tape)
    logits = linear(features, head[HEAD_WEIGHT], head[HEAD_BIAS])
    loss, dlogits, probs = softmax_cross_entropy(logits, labels)
    accuracy = float(np.mean(probs.argmax(axis=1) == labels))
    dfeatures, dweight, dbias = linear_backward(dlogits, features, head[HEAD_WEIGHT])
    grads, _ = backward(model, tape, dfeatures)
    grads[HEAD_WEIGHT] = dweight
    grads[HEAD_BIAS] = dbias
    return loss, accuracy, grads


def train(model: BackboneModel, head: Dict[str, np.ndarray], data: LabeledImages,
          cfg: TrainConfig) -> TrainResult:
    """
    Minimize softmax cross-entropy with SGD + momentum.

    The input model and head are not modified; the result holds trained
    copies and one LossRecord per batch (epochs x batches records).

    Raises:
        DatasetError: empty dataset
        ShapeMismatchError: labels outside the head's classes
        DivergenceError: non-finite loss
    """
    if len(data) == 0:
        raise DatasetError("training set is empty")
    num_classes = head[HEAD_WEIGHT].shape[0]
    if data.labels.min() < 0 or data.labels.max() >= num_classes:
        raise ShapeMismatchError("train", "label range", f"[0, {num_classes})",
                                 (int(data.labels.min()), int(data.labels.max())))

    model = model.copy()
    head = {name: value.copy() for name, value in head.items()}
    params = dict(model.weights)
    params.update(head)
    optimizer = SGD(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    rng = rng_for(cfg.seed, "shuffle")
    tag = "[QAT]" if cfg.mode == "qat" else "[TRAIN]"
    history: List[LossRecord] = []
    n = len(data)

    for epoch in range(cfg.epochs):
        lr = learning_rate_at(cfg, epoch)
        order = rng.permutation(n)
        epoch_losses, epoch_accs = [], []
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            images = data.images[idx]
            if cfg.hflip:
                flip = rng.random(len(idx)) < 0.5
                images = np.where(flip[:, None, None, None], images[..., ::-1], images)
            labels = data.labels[idx]

            loss, accuracy, grads = train_step(model, head, images, labels, cfg)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, batch, loss)
            optimizer.step(params, grads, learning_rate=lr)

            history.append(LossRecord(epoch=epoch, batch=batch, loss=loss, train_acc=accuracy))
            epoch_losses.append(loss)
            epoch_accs.append(accuracy)
            logger.debug(f"{tag} epoch {epoch} batch {batch}: loss={loss:.4f} acc={accuracy:.3f}")

        logger.info(
            f"{tag} Epoch {epoch + 1}/{cfg.epochs}: loss={np.mean(epoch_losses):.4f} "
            f"acc={100 * np.mean(epoch_accs):.2f}% lr={lr:.4g}"
        )

    return TrainResult(model=model, head=head, history=history)
