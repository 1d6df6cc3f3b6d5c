"""Architectures and training: audio CNNs, the text MLP, shallow models,
the training loop with early stopping, feature extraction, track averaging,
and late fusion of per-modality vectors.
"""

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    ConfigInvalid,
    EmptyAlbum,
    MissingModality,
    NonFiniteLoss,
    TruncatedFile,
)
from .nn import ModelGraph, make_optimizer

LOW_WIDTHS = (64, 128, 128, 64)
HIGH_WIDTHS = (256, 512, 1024, 1024)
FILTER_SHAPES = ("3x3", "4x96", "4x70")
CNN_FEATURE_UNITS = 512
TEXT_HIDDEN_UNITS = 2048
MODALITY_ORDER = ("A", "T", "I")


@dataclass
class AudioCnnConfig:
    filter_shape: str  # "3x3" | "4x96" | "4x70"
    width: str  # "low" | "high"
    head: str  # "logistic" | "cosine"
    dropout: float | None = None  # default rule applied when None

    def __post_init__(self):
        if self.filter_shape not in FILTER_SHAPES:
            raise ConfigInvalid(f"unknown filter shape {self.filter_shape!r}")
        if self.width not in ("low", "high"):
            raise ConfigInvalid(f"unknown width {self.width!r}")
        if self.head not in ("logistic", "cosine"):
            raise ConfigInvalid(f"unknown head {self.head!r}")
        if self.dropout is None:
            # dropout only helps the wide cosine configurations
            self.dropout = 0.5 if (self.width == "high" and self.head == "cosine") else 0.0
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigInvalid("dropout must be in [0, 1)")

    @property
    def widths(self):
        return HIGH_WIDTHS if self.width == "high" else LOW_WIDTHS


def _conv_plan(filter_shape, layer_idx, h, w):
    """(kh, kw, ph, pw) for one conv+pool stage, clipped to the current map."""
    if filter_shape == "3x3":
        kh, kw = min(3, h), min(3, w)
        ph, pw = 2, 4
    elif filter_shape == "4x96":
        # first conv collapses the frequency axis entirely
        kh = h if layer_idx == 0 else 1
        kw = min(4, w)
        ph, pw = 1, 4
    else:  # 4x70: slight convolution across frequency, then 3x3
        if layer_idx == 0:
            kh, kw = min(70, h), min(4, w)
        else:
            kh, kw = min(3, h), min(3, w)
        ph, pw = 2, 4
    oh, ow = h - kh + 1, w - kw + 1
    ph, pw = min(ph, oh), min(pw, ow)
    return kh, kw, ph, pw, oh // ph, ow // pw


def build_audio_cnn(cfg, out_dim, n_bins=96, width=323, seed=0):
    """Four conv+ReLU+maxpool stages, flatten, 512-unit feature layer,
    optional dropout, head."""
    specs = []
    h, w = n_bins, width
    for i, n_filters in enumerate(cfg.widths):
        kh, kw, ph, pw, h, w = _conv_plan(cfg.filter_shape, i, h, w)
        specs.append({"kind": "conv2d", "filters": n_filters, "kh": kh, "kw": kw})
        specs.append({"kind": "relu"})
        specs.append({"kind": "maxpool", "ph": ph, "pw": pw})
        if h < 1 or w < 1:
            raise ConfigInvalid(f"input {n_bins}x{width} too small for 4 conv stages")
    specs.append({"kind": "flatten"})
    specs.append({"kind": "dense", "out": CNN_FEATURE_UNITS})
    specs.append({"kind": "relu"})
    if cfg.dropout > 0:
        specs.append({"kind": "dropout", "rate": cfg.dropout})
    head = {"kind": cfg.head, "dim": out_dim}
    return ModelGraph((1, n_bins, width), specs, head, seed)


def build_text_mlp(out_dim, head, in_dim=10_000, seed=0):
    """Two 2048-unit ReLU layers; the second activation is the text feature."""
    if in_dim < 1 or out_dim < 1:
        raise ConfigInvalid("dims must be >= 1")
    specs = [
        {"kind": "dense", "out": TEXT_HIDDEN_UNITS},
        {"kind": "relu"},
        {"kind": "dense", "out": TEXT_HIDDEN_UNITS},
        {"kind": "relu"},
    ]
    return ModelGraph((in_dim,), specs, {"kind": head, "dim": out_dim}, seed)


def build_shallow(in_dim, out_dim, head, dropout=0.0, seed=0):
    """Input connected directly to the output layer, optional input dropout."""
    if in_dim < 1 or out_dim < 1:
        raise ConfigInvalid("dims must be >= 1")
    specs = []
    if dropout > 0:
        specs.append({"kind": "dropout", "rate": dropout})
    return ModelGraph((in_dim,), specs, {"kind": head, "dim": out_dim}, seed)


# ------------------------------------------------------------------ training

@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    patience: int = 5
    seed: int = 0
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})


def _epoch_loss(model, x, y, batch_size):
    total = 0.0
    m = x.shape[0]
    for lo in range(0, m, batch_size):
        xb = x[lo:lo + batch_size]
        out = model.forward(xb, train=False)
        total += model.loss(out, y[lo:lo + batch_size]) * xb.shape[0]
    return total / m


def train(model, x_train, y_train, x_val=None, y_val=None, config=None):
    """Mini-batch training with early stopping on validation loss.

    Returns a history list of {epoch, train_loss, val_loss, seconds};
    the model ends up holding the best-validation parameters (or the final
    ones when no validation set is given).
    """
    config = config or TrainConfig()
    optimizer = make_optimizer(config.optimizer)
    m = x_train.shape[0]
    history = []
    best_val = np.inf
    best_params = None
    stale = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(m)
        running = 0.0
        for lo in range(0, m, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            model.forward(xb, train=True, rng=rng)
            loss, dz = model.loss_grad(yb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch}, batch at {lo}: loss={loss}")
            model.backward(dz)
            optimizer.step(model.params_and_grads())
            running += loss * xb.shape[0]
        train_loss = running / m
        record = {"epoch": epoch, "train_loss": train_loss,
                  "val_loss": None, "seconds": time.perf_counter() - t0}
        if x_val is not None and x_val.shape[0] > 0:
            val_loss = _epoch_loss(model, x_val, y_val, config.batch_size)
            if not np.isfinite(val_loss):
                raise NonFiniteLoss(f"epoch {epoch}: val loss={val_loss}")
            record["val_loss"] = val_loss
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_params = model.get_params()
                stale = 0
            else:
                stale += 1
            record["seconds"] = time.perf_counter() - t0
            history.append(record)
            if stale > config.patience:
                break
        else:
            history.append(record)
    if best_params is not None:
        model.set_params(best_params)
    return history


def save_history(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def extract_features(model, x, batch_size=64):
    """Penultimate activations (input to the head dense layer), eval mode."""
    chunks = []
    for lo in range(0, x.shape[0], batch_size):
        model.forward(x[lo:lo + batch_size], train=False)
        chunks.append(model.features().copy())
    return np.concatenate(chunks, axis=0)


def predict(model, x, batch_size=64):
    chunks = []
    for lo in range(0, x.shape[0], batch_size):
        chunks.append(model.forward(x[lo:lo + batch_size], train=False).copy())
    return np.concatenate(chunks, axis=0)


def average_tracks(track_vectors_by_album):
    """Arithmetic mean of each album's track vectors."""
    out = {}
    for album_id, vectors in track_vectors_by_album.items():
        if len(vectors) == 0:
            raise EmptyAlbum(f"album {album_id!r} has no track vectors")
        out[album_id] = np.mean(np.asarray(vectors, dtype=np.float64), axis=0)
    return out


# -------------------------------------------------------------------- fusion

@dataclass
class FusionInput:
    matrix: np.ndarray  # (m, sum of block dims)
    blocks: dict  # modality -> slice
    zero_rows: dict  # modality -> list of item indices with zero vectors


def _l2_rows(mat):
    norms = np.linalg.norm(mat, axis=1)
    out = mat.copy()
    ok = norms > 0
    out[ok] /= norms[ok, None]
    return out, np.nonzero(~ok)[0].tolist()


def fuse(modality_vectors, selection=MODALITY_ORDER):
    """Concatenate l2-normalized modality blocks in fixed A, T, I order."""
    selection = [m for m in MODALITY_ORDER if m in selection]
    if not selection:
        raise ConfigInvalid("empty modality selection")
    blocks = {}
    zero_rows = {}
    parts = []
    n_items = None
    offset = 0
    for mod in selection:
        if mod not in modality_vectors or modality_vectors[mod] is None:
            raise MissingModality(f"modality {mod!r} not available")
        mat = np.asarray(modality_vectors[mod], dtype=np.float64)
        if n_items is None:
            n_items = mat.shape[0]
        elif mat.shape[0] != n_items:
            raise MissingModality(f"modality {mod!r} covers {mat.shape[0]} of {n_items} items")
        normed, zeros = _l2_rows(mat)
        parts.append(normed)
        blocks[mod] = slice(offset, offset + mat.shape[1])
        zero_rows[mod] = zeros
        offset += mat.shape[1]
    return FusionInput(np.concatenate(parts, axis=1), blocks, zero_rows)


# ------------------------------------------------------------- serialization

FEATURE_MAGIC = b"MUFV"


def save_feature_vectors(matrix, item_ids, path):
    matrix = np.asarray(matrix, dtype=np.float64)
    m, dim = matrix.shape
    if len(item_ids) != m:
        raise ConfigInvalid("item id count does not match matrix rows")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", m, dim))
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())
    with open(str(path) + ".ids", "w", encoding="utf-8") as fh:
        for item_id in item_ids:
            fh.write(str(item_id) + "\n")


def load_feature_vectors(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FEATURE_MAGIC:
        raise BadMagic(f"expected {FEATURE_MAGIC!r}")
    if len(data) < 12:
        raise TruncatedFile(path)
    m, dim = struct.unpack("<II", data[4:12])
    need = 12 + 8 * m * dim
    if len(data) < need:
        raise TruncatedFile(path)
    matrix = np.frombuffer(data[12:need], dtype="<f8").reshape(m, dim).copy()
    with open(str(path) + ".ids", encoding="utf-8") as fh:
        item_ids = [ln.strip() for ln in fh if ln.strip()]
    return matrix, item_ids
