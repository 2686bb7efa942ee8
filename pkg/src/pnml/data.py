"""Datasets: IDX/MNIST loading, synthetic blobs, noise inputs, label noise,
checkpoint persistence. Features are always float64 scaled into [-1, 1]."""

from __future__ import annotations

import gzip
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, d) float64 in [-1, 1]
    labels: np.ndarray  # (N,) int64 in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"bad dataset shapes: {X.shape}, {y.shape}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError("label out of range")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx].copy(), self.labels[idx].copy(),
                       self.num_classes)

    def with_sample(self, x: np.ndarray, y: int) -> "Dataset":
        """Append one (x, y) pair; used by the per-label fine-tuning loop."""
        X = np.vstack([self.features, np.asarray(x, dtype=np.float64)[None, :]])
        labels = np.append(self.labels, np.int64(y))
        return Dataset(X, labels, self.num_classes)


def _open_maybe_gz(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Parse big-endian IDX image/label files (MNIST layout).

    Pixels map linearly from [0, 255] to [-1, 1].
    """
    with _open_maybe_gz(images_path) as f:
        header = f.read(16)
        if len(header) < 16:
            raise IdxFormatError("truncated image header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(f"bad image magic 0x{magic:08x}")
        take = n if limit is None else min(limit, n)
        raw = f.read(take * rows * cols)
        if len(raw) < take * rows * cols:
            raise IdxFormatError("truncated image data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(take, rows * cols)

    with _open_maybe_gz(labels_path) as f:
        header = f.read(8)
        if len(header) < 8:
            raise IdxFormatError("truncated label header")
        magic, n_lab = struct.unpack(">II", header)
        if magic != LABEL_MAGIC:
            raise IdxFormatError(f"bad label magic 0x{magic:08x}")
        if n_lab != n:
            raise IdxFormatError(f"image/label count mismatch: {n} vs {n_lab}")
        raw = f.read(take)
        if len(raw) < take:
            raise IdxFormatError("truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    features = pixels.astype(np.float64) * (2.0 / 255.0) - 1.0
    return Dataset(features, labels, 10)


def data_dir() -> Path:
    return Path(os.environ.get("PNML_DATA_DIR", "data"))


def mnist_paths(split: str = "train") -> tuple[Path, Path]:
    base = data_dir()
    prefix = "train" if split == "train" else "t10k"
    for suffix in ("", ".gz"):
        img = base / f"{prefix}-images-idx3-ubyte{suffix}"
        lab = base / f"{prefix}-labels-idx1-ubyte{suffix}"
        if img.exists() and lab.exists():
            return img, lab
    raise FileNotFoundError(
        f"MNIST {split} IDX files not found under {base} (set PNML_DATA_DIR)"
    )


def mnist_available() -> bool:
    try:
        mnist_paths("train")
        mnist_paths("test")
        return True
    except FileNotFoundError:
        return False


def load_mnist(split: str = "train", limit: int | None = None) -> Dataset:
    img, lab = mnist_paths(split)
    return load_idx(img, lab, limit=limit)


def load_digits_dataset(seed: int = 0) -> tuple[Dataset, Dataset]:
    """Bundled 8x8 handwritten-digits set (1797 samples, 10 classes) as a
    desk-scale stand-in when MNIST files are unavailable. Returns a seeded
    train/test split, features scaled from [0, 16] to [-1, 1]."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    X = digits.data.astype(np.float64) * (2.0 / 16.0) - 1.0
    y = digits.target.astype(np.int64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(X.shape[0])
    n_test = 400
    test_idx, train_idx = order[:n_test], order[n_test:]
    return (
        Dataset(X[train_idx], y[train_idx], 10),
        Dataset(X[test_idx], y[test_idx], 10),
    )


def synth_blobs(n_per_class: int, classes: int, d: int, separation: float,
                seed: int) -> Dataset:
    """Isotropic Gaussian blobs at seeded random centers.

    Centers are uniform in [-0.8, 0.8]^d; per-point noise has sigma =
    1/separation, so `separation` is roughly the center-scale-to-sigma ratio.
    Features clamp to [-1, 1].
    """
    if n_per_class <= 0 or classes <= 0 or d <= 0:
        raise ValueError("positive counts required")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.8, 0.8, size=(classes, d))
    sigma = 1.0 / separation
    X = np.empty((n_per_class * classes, d))
    y = np.empty(n_per_class * classes, dtype=np.int64)
    for c in range(classes):
        sl = slice(c * n_per_class, (c + 1) * n_per_class)
        X[sl] = centers[c] + sigma * rng.standard_normal((n_per_class, d))
        y[sl] = c
    return Dataset(np.clip(X, -1.0, 1.0), y, classes)


def gaussian_noise_inputs(n: int, d: int, seed: int) -> np.ndarray:
    """i.i.d. standard normal inputs clamped to [-1, 1]; OOD probes."""
    if n <= 0 or d <= 0:
        raise ValueError("positive counts required")
    rng = np.random.default_rng(seed)
    return np.clip(rng.standard_normal((n, d)), -1.0, 1.0)


def randomize_labels(dataset: Dataset, p: float, seed: int) -> Dataset:
    """With probability p per sample, redraw the label uniformly over all
    classes (the original label may be redrawn)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if p == 0.0:
        return dataset
    rng = np.random.default_rng(seed)
    flip = rng.random(dataset.num_samples) < p
    drawn = rng.integers(0, dataset.num_classes, size=dataset.num_samples)
    labels = np.where(flip, drawn, dataset.labels).astype(np.int64)
    return Dataset(dataset.features.copy(), labels, dataset.num_classes)


def save_checkpoint(params, path) -> None:
    """JSON checkpoint; floats serialize via repr so the round-trip is
    bit-exact for float64."""
    doc = {
        "arch": [params.in_dim] + [l.out_dim for l in params.layers],
        "layers": [
            {
                "rows": l.weight.shape[0],
                "cols": l.weight.shape[1],
                "weight": l.weight.ravel().tolist(),
                "bias": l.bias.tolist(),
            }
            for l in params.layers
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    from .nn import Layer, ModelParams

    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
    if "layers" not in doc:
        raise CheckpointError(f"{path}: missing 'layers'")
    layers = []
    for i, ld in enumerate(doc["layers"]):
        for key in ("rows", "cols", "weight", "bias"):
            if key not in ld:
                raise CheckpointError(f"{path}: layers[{i}] missing '{key}'")
        rows, cols = int(ld["rows"]), int(ld["cols"])
        w = np.asarray(ld["weight"], dtype=np.float64)
        b = np.asarray(ld["bias"], dtype=np.float64)
        if w.size != rows * cols or b.size != rows:
            raise CheckpointError(f"{path}: layers[{i}] shape mismatch")
        layers.append(Layer(w.reshape(rows, cols), b))
    return ModelParams(tuple(layers))
