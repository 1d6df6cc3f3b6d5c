"""Deterministic SGD-with-momentum and Adam optimizers, updating in place."""

import numpy as np

from ..errors import ShapeMismatch


class SGD:
    def __init__(self, lr=1e-2, momentum=0.0):
        self.lr = lr
        self.momentum = momentum
        self._velocity = None

    def step(self, params_and_grads):
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p, _ in params_and_grads]
        if len(self._velocity) != len(params_and_grads):
            raise ShapeMismatch("optimizer state does not match parameter blocks")
        for v, (p, g) in zip(self._velocity, params_and_grads):
            if p.shape != g.shape:
                raise ShapeMismatch(f"{p.shape} vs {g.shape}")
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def step(self, params_and_grads):
        if self._m is None:
            self._m = [np.zeros_like(p) for p, _ in params_and_grads]
            self._v = [np.zeros_like(p) for p, _ in params_and_grads]
        if len(self._m) != len(params_and_grads):
            raise ShapeMismatch("optimizer state does not match parameter blocks")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for m, v, (p, g) in zip(self._m, self._v, params_and_grads):
            if p.shape != g.shape:
                raise ShapeMismatch(f"{p.shape} vs {g.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(config):
    """config: {"kind": "sgd"|"adam", ...hyperparameters}."""
    cfg = dict(config)
    kind = cfg.pop("kind", "adam")
    if kind == "sgd":
        return SGD(**cfg)
    if kind == "adam":
        return Adam(**cfg)
    raise ValueError(f"unknown optimizer {kind!r}")
