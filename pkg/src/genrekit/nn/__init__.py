from .layers import Conv2d, Dense, Dropout, Flatten, MaxPool, ReLU, Sigmoid
from .model import (
    ModelGraph,
    grad_check,
    load_model,
    loss_cosine,
    loss_logistic,
    save_model,
)
from .optim import SGD, Adam, make_optimizer

__all__ = [
    "Conv2d", "Dense", "Dropout", "Flatten", "MaxPool", "ReLU", "Sigmoid",
    "ModelGraph", "grad_check", "load_model", "save_model",
    "loss_logistic", "loss_cosine", "SGD", "Adam", "make_optimizer",
]
