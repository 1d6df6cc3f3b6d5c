"""Layer menu for the fixed-topology network engine.

Everything runs in double precision.  Convolution and pooling delegate to
the kernels module (numba or numpy backend).
"""

import numpy as np

from .. import kernels
from ..errors import ConfigInvalid, ShapeMismatch


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _xavier_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Stateless unless it owns parameters; caches what backward needs."""

    params = ()  # names of parameter attributes

    def spec(self):
        raise NotImplementedError

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    params = ("w", "b")

    def __init__(self, in_dim, out_dim, rng, init="he"):
        if out_dim < 1:
            raise ConfigInvalid("dense out_dim must be >= 1")
        if init == "he":
            self.w = _he_uniform(rng, (in_dim, out_dim), in_dim)
        else:
            self.w = _xavier_uniform(rng, (in_dim, out_dim), in_dim, out_dim)
        self.b = np.zeros(out_dim)
        self.dw = None
        self.db = None

    def spec(self):
        return {"kind": "dense", "out": self.w.shape[1]}

    def out_shape(self, in_shape):
        return (self.w.shape[1],)

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeMismatch(f"dense expects (B, {self.w.shape[0]}), got {x.shape}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T


class Conv2d(Layer):
    params = ("w", "b")

    def __init__(self, in_channels, n_filters, kh, kw, rng):
        if kh < 1 or kw < 1 or n_filters < 1:
            raise ConfigInvalid("conv2d dims must be >= 1")
        fan_in = in_channels * kh * kw
        self.w = _he_uniform(rng, (n_filters, in_channels, kh, kw), fan_in)
        self.b = np.zeros(n_filters)
        self.dw = None
        self.db = None

    def spec(self):
        f, _, kh, kw = self.w.shape
        return {"kind": "conv2d", "filters": f, "kh": kh, "kw": kw}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        f, _, kh, kw = self.w.shape
        if kh > h or kw > w:
            raise ShapeMismatch(f"kernel ({kh},{kw}) larger than input ({h},{w})")
        return (f, h - kh + 1, w - kw + 1)

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        if x.ndim != 4 or x.shape[1] != self.w.shape[1]:
            raise ShapeMismatch(f"conv2d expects (B, {self.w.shape[1]}, H, W), got {x.shape}")
        self._x = np.ascontiguousarray(x)
        return kernels.conv2d_forward(self._x, self.w, self.b)

    def backward(self, dout):
        dx, self.dw, self.db = kernels.conv2d_backward(
            self._x, self.w, np.ascontiguousarray(dout))
        return dx


class MaxPool(Layer):
    def __init__(self, ph, pw):
        if ph < 1 or pw < 1:
            raise ConfigInvalid("pool dims must be >= 1")
        self.ph = ph
        self.pw = pw

    def spec(self):
        return {"kind": "maxpool", "ph": self.ph, "pw": self.pw}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if self.ph > h or self.pw > w:
            raise ShapeMismatch(f"pool ({self.ph},{self.pw}) larger than input ({h},{w})")
        return (c, h // self.ph, w // self.pw)

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        self._shape = x.shape
        out, self._arg = kernels.maxpool_forward(np.ascontiguousarray(x), self.ph, self.pw)
        return out

    def backward(self, dout):
        return kernels.maxpool_backward(
            np.ascontiguousarray(dout), self._arg, self._shape, self.ph, self.pw)


class ReLU(Layer):
    def spec(self):
        return {"kind": "relu"}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class Sigmoid(Layer):
    def spec(self):
        return {"kind": "sigmoid"}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._y = y
        return y

    def backward(self, dout):
        return dout * self._y * (1.0 - self._y)


class Dropout(Layer):
    """Inverted dropout: train-time activations scaled by 1/(1-rate)."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ConfigInvalid("dropout rate must be in [0, 1)")
        self.rate = rate
        self._mask = None

    def spec(self):
        return {"kind": "dropout", "rate": self.rate}

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if not freeze_dropout or self._mask is None or self._mask.shape != x.shape:
            if rng is None:
                raise ConfigInvalid("train-mode dropout needs an rng")
            self._mask = rng.random(x.shape) >= self.rate
        return x * self._mask / (1.0 - self.rate)

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask / (1.0 - self.rate)


class Flatten(Layer):
    def spec(self):
        return {"kind": "flatten"}

    def out_shape(self, in_shape):
        out = 1
        for s in in_shape:
            out *= s
        return (out,)

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)
