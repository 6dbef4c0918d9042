"""SGD with momentum and L2 weight decay, updating parameters in place."""
from typing import Dict, Optional

import numpy as np

from core.exceptions import ShapeMismatchError


class SGD:
    """
    v <- momentum * v + grad + weight_decay * w
    w <- w - lr * v
    """

    def __init__(self, learning_rate: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
             learning_rate: Optional[float] = None) -> None:
        lr = self.learning_rate if learning_rate is None else learning_rate
        for name, grad in grads.items():
            w = params[name]
            if grad.shape != w.shape:
                raise ShapeMismatchError("sgd", f"grad of {name}", w.shape, grad.shape)
            g = grad + self.weight_decay * w if self.weight_decay else grad
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            if lr:
                w -= lr * v
