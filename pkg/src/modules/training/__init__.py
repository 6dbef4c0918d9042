"""
Backbone training (float and QAT) and gradient checking.
"""

from modules.training.optimizer import SGD
from modules.training.trainer import TrainResult, init_head, train, train_step
from modules.training.gradcheck import GradCheckReport, grad_check

__all__ = [
    'SGD',
    'TrainResult',
    'init_head',
    'train',
    'train_step',
    'GradCheckReport',
    'grad_check',
]
