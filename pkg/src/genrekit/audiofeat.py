"""Audio features: precomputed log-CQT spectrogram ingestion, patch sampling,
per-bin standardization, and timbre summary statistics.

Spectrograms arrive precomputed (96 frequency bins expected); no signal
processing happens here.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, NonFiniteValue, StatsDimensionMismatch, TruncatedFile

SPECTROGRAM_MAGIC = b"MUCQ"
TIMBRE_MAGIC = b"MUTB"
DEFAULT_PATCH_WIDTH = 323  # 15 s at 22050 Hz / hop 1024


@dataclass
class Spectrogram:
    values: np.ndarray  # (n_bins, n_frames)

    @property
    def n_bins(self):
        return self.values.shape[0]

    @property
    def n_frames(self):
        return self.values.shape[1]


def _save_matrix(values, path, magic):
    values = np.asarray(values)
    n_bins, n_frames = values.shape
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<III", 1, n_bins, n_frames))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def _load_matrix(path, magic):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != magic:
        raise BadMagic(f"{path}: expected magic {magic!r}, got {data[:4]!r}")
    if len(data) < 16:
        raise TruncatedFile(path)
    version, n_bins, n_frames = struct.unpack("<III", data[4:16])
    if version != 1:
        raise BadMagic(f"{path}: unsupported version {version}")
    need = 16 + 4 * n_bins * n_frames
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, got {len(data)}")
    values = np.frombuffer(data[16:need], dtype="<f4").reshape(n_bins, n_frames)
    values = values.astype(np.float64)
    if not np.isfinite(values).all():
        raise NonFiniteValue(path)
    return values


def save_spectrogram(spec, path):
    _save_matrix(spec.values, path, SPECTROGRAM_MAGIC)


def load_spectrogram(path):
    return Spectrogram(_load_matrix(path, SPECTROGRAM_MAGIC))


def save_timbre(values, path):
    if values.shape[0] != 12:
        raise StatsDimensionMismatch("timbre matrices have exactly 12 rows")
    _save_matrix(values, path, TIMBRE_MAGIC)


def load_timbre(path):
    values = _load_matrix(path, TIMBRE_MAGIC)
    if values.shape[0] != 12:
        raise StatsDimensionMismatch(f"{path}: expected 12 rows, got {values.shape[0]}")
    return values


def sample_patch(spec, width, rng):
    """One fixed-width patch at a uniformly random frame offset.

    `rng` is an int seed or a numpy Generator.  Tracks shorter than `width`
    are right-padded by repeating their final frame.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    values = spec.values
    n = spec.n_frames
    if n >= width:
        start = int(rng.integers(0, n - width + 1))
        return values[:, start:start + width].copy()
    pad = np.repeat(values[:, -1:], width - n, axis=1)
    return np.concatenate([values, pad], axis=1)


@dataclass
class BinStats:
    mean: np.ndarray  # per frequency bin
    std: np.ndarray

    STD_FLOOR = 1e-6


def fit_bin_stats(patches):
    """Per-bin mean/std over a stack of training patches (n, bins, frames)."""
    stack = np.asarray(patches)
    mean = stack.mean(axis=(0, 2))
    std = stack.std(axis=(0, 2))
    return BinStats(mean, std)


def standardize(patches, stats):
    """(value - bin mean) / max(bin std, 1e-6), vectorized over patches."""
    patches = np.asarray(patches)
    if patches.shape[-2] != stats.mean.shape[0]:
        raise StatsDimensionMismatch(
            f"patches have {patches.shape[-2]} bins, stats have {stats.mean.shape[0]}")
    denom = np.maximum(stats.std, BinStats.STD_FLOOR)
    return (patches - stats.mean[..., :, None]) / denom[..., :, None]


def unstandardize(patches, stats):
    denom = np.maximum(stats.std, BinStats.STD_FLOOR)
    return np.asarray(patches) * denom[..., :, None] + stats.mean[..., :, None]


def timbre_stats(timbre):
    """mean, max, population variance, l2-norm per coefficient row → 48-vector."""
    t = np.asarray(timbre, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != 12 or t.shape[1] < 1:
        raise StatsDimensionMismatch(f"expected (12, N>=1), got {t.shape}")
    return np.concatenate([
        t.mean(axis=1),
        t.max(axis=1),
        t.var(axis=1),
        np.linalg.norm(t, axis=1),
    ])
