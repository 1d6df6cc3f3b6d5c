"""Network graph: ordered layers plus a logistic or cosine output head,
with exact analytic gradients and a finite-difference checker.
"""

import json
import struct

import numpy as np

from ..errors import BadMagic, ConfigInvalid, ShapeMismatch, TruncatedFile
from .layers import Conv2d, Dense, Dropout, Flatten, MaxPool, ReLU, Sigmoid

BCE_CLAMP = 1e-7
COSINE_EPS = 1e-12


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_logistic(probs, targets):
    """Mean binary cross-entropy over batch and labels; probs clamped."""
    if probs.shape != targets.shape:
        raise ShapeMismatch(f"{probs.shape} vs {targets.shape}")
    p = np.clip(probs, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def loss_cosine(outputs, targets):
    """Mean negative cosine similarity per row; output norms epsilon-guarded."""
    if outputs.shape != targets.shape:
        raise ShapeMismatch(f"{outputs.shape} vs {targets.shape}")
    on = np.maximum(np.linalg.norm(outputs, axis=1), COSINE_EPS)
    tn = np.maximum(np.linalg.norm(targets, axis=1), COSINE_EPS)
    cos = (outputs * targets).sum(axis=1) / (on * tn)
    return float(-cos.mean())


def _cosine_grad(outputs, targets):
    b = outputs.shape[0]
    on = np.maximum(np.linalg.norm(outputs, axis=1, keepdims=True), COSINE_EPS)
    tn = np.maximum(np.linalg.norm(targets, axis=1, keepdims=True), COSINE_EPS)
    cos = ((outputs * targets).sum(axis=1, keepdims=True)) / (on * tn)
    return -(targets / (on * tn) - cos * outputs / (on * on)) / b


def _build_layer(spec, in_shape, rng):
    kind = spec["kind"]
    if kind == "dense":
        if len(in_shape) != 1:
            raise ConfigInvalid("dense needs a flat input; add a flatten layer")
        return Dense(in_shape[0], spec["out"], rng, init=spec.get("init", "he"))
    if kind == "conv2d":
        if len(in_shape) != 3:
            raise ConfigInvalid("conv2d needs (C, H, W) input")
        return Conv2d(in_shape[0], spec["filters"], spec["kh"], spec["kw"], rng)
    if kind == "maxpool":
        return MaxPool(spec["ph"], spec["pw"])
    if kind == "relu":
        return ReLU()
    if kind == "sigmoid":
        return Sigmoid()
    if kind == "dropout":
        return Dropout(spec["rate"])
    if kind == "flatten":
        return Flatten()
    raise ConfigInvalid(f"unknown layer kind {kind!r}")


class ModelGraph:
    """Fixed layer stack ending in a dense head.

    head = {"kind": "logistic" | "cosine", "dim": int}.  The logistic head
    applies a sigmoid after its dense layer and trains with binary
    cross-entropy; the cosine head is linear and trains with negative
    cosine similarity against unit-norm factor targets.
    """

    def __init__(self, input_shape, specs, head, seed):
        if head["kind"] not in ("logistic", "cosine"):
            raise ConfigInvalid(f"unknown head kind {head['kind']!r}")
        if head["dim"] < 1:
            raise ConfigInvalid("head dim must be >= 1")
        self.input_shape = tuple(input_shape)
        self.head = dict(head)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = []
        shape = self.input_shape
        for spec in specs:
            layer = _build_layer(spec, shape, rng)
            shape = layer.out_shape(shape)
            self.layers.append(layer)
        if len(shape) != 1:
            raise ConfigInvalid("head needs a flat input; add a flatten layer")
        self.feature_dim = shape[0]
        head_spec = {"kind": "dense", "out": head["dim"], "init": "xavier"}
        self.head_dense = _build_layer(head_spec, shape, rng)
        self._out = None

    # ------------------------------------------------------------ execution

    def forward(self, x, train=False, rng=None, freeze_dropout=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"expected batch of {self.input_shape}, got {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng, freeze_dropout=freeze_dropout)
        self._features = x
        z = self.head_dense.forward(x, train=train, rng=rng, freeze_dropout=freeze_dropout)
        if self.head["kind"] == "logistic":
            self._out = _stable_sigmoid(z)
        else:
            self._out = z
        return self._out

    def features(self):
        """Penultimate activations: the input to the head dense layer."""
        return self._features

    def loss(self, output, targets):
        if self.head["kind"] == "logistic":
            return loss_logistic(output, targets)
        return loss_cosine(output, targets)

    def loss_grad(self, targets):
        """Loss at the cached forward output and its gradient w.r.t. the
        head dense output."""
        out = self._out
        loss = self.loss(out, targets)
        if self.head["kind"] == "logistic":
            dz = (out - targets) / out.size
        else:
            dz = _cosine_grad(out, targets)
        return loss, dz

    def backward(self, dz):
        dx = self.head_dense.backward(dz)
        for layer in reversed(self.layers):
            dx = layer.backward(dx)
        return dx

    # ----------------------------------------------------------- parameters

    def param_blocks(self):
        """Ordered (name, layer, attr) triples for every parameter tensor."""
        blocks = []
        for i, layer in enumerate(self.layers):
            for attr in layer.params:
                blocks.append((f"layer{i}.{attr}", layer, attr))
        for attr in self.head_dense.params:
            blocks.append((f"head.{attr}", self.head_dense, attr))
        return blocks

    def n_params(self):
        return sum(getattr(layer, attr).size for _, layer, attr in self.param_blocks())

    def get_params(self):
        return [getattr(layer, attr).copy() for _, layer, attr in self.param_blocks()]

    def set_params(self, arrays):
        blocks = self.param_blocks()
        if len(arrays) != len(blocks):
            raise ShapeMismatch("parameter block count mismatch")
        for (_, layer, attr), arr in zip(blocks, arrays):
            cur = getattr(layer, attr)
            if cur.shape != arr.shape:
                raise ShapeMismatch(f"{attr}: {cur.shape} vs {arr.shape}")
            cur[...] = arr

    def grads(self):
        return [getattr(layer, "d" + attr) for _, layer, attr in self.param_blocks()]

    def params_and_grads(self):
        return [(getattr(layer, attr), getattr(layer, "d" + attr))
                for _, layer, attr in self.param_blocks()]


def grad_check(model, x, targets, step=1e-4, tolerance=1e-4,
               max_coords_per_block=10, seed=0):
    """Central finite differences against analytic gradients.

    Relative error per coordinate: |a - n| / max(1e-8, |a| + |n|).
    Dropout masks are frozen by a first seeded forward pass.
    """
    rng = np.random.default_rng(seed)
    model.forward(x, train=True, rng=rng)
    loss, dz = model.loss_grad(targets)
    model.backward(dz)
    analytic = [g.copy() for g in model.grads()]

    def frozen_loss():
        out = model.forward(x, train=True, rng=None, freeze_dropout=True)
        return model.loss(out, targets)

    coord_rng = np.random.default_rng(seed + 1)
    report = {}
    for (name, layer, attr), grad in zip(model.param_blocks(), analytic):
        param = getattr(layer, attr)
        flat = param.reshape(-1)
        n = flat.size
        idx = (np.arange(n) if n <= max_coords_per_block
               else coord_rng.choice(n, size=max_coords_per_block, replace=False))
        worst = 0.0
        for k in idx:
            orig = flat[k]
            flat[k] = orig + step
            lp = frozen_loss()
            flat[k] = orig - step
            lm = frozen_loss()
            flat[k] = orig
            numeric = (lp - lm) / (2.0 * step)
            a = grad.reshape(-1)[k]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, rel)
        report[name] = {"max_rel_err": worst, "passed": worst < tolerance}
    report["__all__"] = all(v["passed"] for k, v in report.items() if k != "__all__")
    return report


# ------------------------------------------------------------- serialization

MODEL_MAGIC = b"MUNN"


def save_model(model, path):
    header = {
        "input_shape": list(model.input_shape),
        "specs": [layer.spec() for layer in model.layers],
        "head": model.head,
        "seed": model.seed,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, layer, attr in model.param_blocks():
            fh.write(np.ascontiguousarray(getattr(layer, attr), dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MODEL_MAGIC:
        raise BadMagic(f"expected {MODEL_MAGIC!r}")
    if len(data) < 8:
        raise TruncatedFile(path)
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen].decode("utf-8"))
    model = ModelGraph(tuple(header["input_shape"]), header["specs"],
                       header["head"], header["seed"])
    off = 8 + hlen
    arrays = []
    for _, layer, attr in model.param_blocks():
        shape = getattr(layer, attr).shape
        count = int(np.prod(shape))
        need = off + 8 * count
        if len(data) < need:
            raise TruncatedFile(path)
        arrays.append(np.frombuffer(data[off:need], dtype="<f8").reshape(shape).copy())
        off = need
    model.set_params(arrays)
    return model
