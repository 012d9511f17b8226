"""MNIST ingestion and the pooled angle features fed to the encoder.

IDX files are read directly (optionally gzip-compressed). Images are
filtered to digits 0-3, average-pooled to k x k (k**2 = qubit count) and
scaled from [0, 255] to [0, pi].
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import derive_seed, uniforms

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DIGIT_CLASSES = (0, 1, 2, 3)
POOL_SIZES = {4: 2, 9: 3, 16: 4}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxError(ValueError):
    pass


class MagicMismatchError(IdxError):
    pass


class TruncatedPayloadError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class RawDataset:
    images: np.ndarray  # (N, rows, cols) uint8
    labels: np.ndarray  # (N,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatchError(
                f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)


@dataclass
class FeatureSet:
    features: np.ndarray  # (N, n_qubits) radians in [0, pi]
    labels: np.ndarray  # (N,) ints in 0..3
    n_qubits: int

    def __len__(self):
        return len(self.labels)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, self.n_qubits)
        self.labels = np.asarray(self.labels, dtype=np.int64)


def _read(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(blob: bytes, magic: int, ndim: int, path) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise TruncatedPayloadError(f"{path}: header shorter than {header} bytes")
    found = struct.unpack(">I", blob[:4])[0]
    if found != magic:
        raise MagicMismatchError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    size = int(np.prod(dims))
    if len(blob) - header < size:
        raise TruncatedPayloadError(
            f"{path}: header promises {size} payload bytes, found {len(blob) - header}")
    return np.frombuffer(blob, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(path_images, path_labels) -> RawDataset:
    images = _parse_idx(_read(path_images), IMAGE_MAGIC, 3, path_images)
    labels = _parse_idx(_read(path_labels), LABEL_MAGIC, 1, path_labels)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{path_images} has {len(images)} images, {path_labels} has {len(labels)} labels")
    return RawDataset(images, labels)


def write_idx(path_images, path_labels, images: np.ndarray, labels: np.ndarray) -> None:
    """Write an image/label pair in IDX format (gzip if the name ends in .gz)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    for path, magic, arr in ((path_images, IMAGE_MAGIC, images),
                             (path_labels, LABEL_MAGIC, labels)):
        blob = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "wb") as f:
            f.write(blob)


def select_subset(raw: RawDataset, classes=DIGIT_CLASSES, n: int = 100,
                  stratified: bool = False) -> RawDataset:
    """First ``n`` samples in file order whose label is in ``classes``.

    With ``stratified`` the first ``n / len(classes)`` of each class are
    taken instead (kept in file order).
    """
    classes = tuple(classes)
    mask = np.isin(raw.labels, classes)
    if stratified:
        if n % len(classes):
            raise ValueError("stratified selection needs n divisible by the class count")
        per = n // len(classes)
        picked = []
        for c in classes:
            idx = np.flatnonzero(raw.labels == c)[:per]
            if len(idx) < per:
                raise InsufficientSamplesError(
                    f"class {c}: need {per} samples, only {len(idx)} available")
            picked.append(idx)
        idx = np.sort(np.concatenate(picked)) if picked else np.array([], dtype=int)
    else:
        idx = np.flatnonzero(mask)[:n]
        if len(idx) < n:
            raise InsufficientSamplesError(
                f"need {n} samples of classes {classes}, only {len(idx)} available "
                f"(short by {n - len(idx)})")
    return RawDataset(raw.images[idx], raw.labels[idx])


def bin_edges(size: int, k: int) -> list[tuple[int, int]]:
    return [(b * size // k, (b + 1) * size // k) for b in range(k)]


def downscale(image: np.ndarray, k: int) -> np.ndarray:
    """Adaptive average pooling to ``k x k`` (values stay on the 0-255 scale)."""
    if k not in (2, 3, 4):
        raise ValueError(f"pool size must be 2, 3 or 4, got {k}")
    image = np.asarray(image, dtype=float)
    rows, cols = bin_edges(image.shape[0], k), bin_edges(image.shape[1], k)
    return np.array([[image[r0:r1, c0:c1].mean() for c0, c1 in cols] for r0, r1 in rows])


def to_angles(pooled: np.ndarray) -> np.ndarray:
    pooled = np.asarray(pooled, dtype=float)
    if pooled.min() < 0 or pooled.max() > 255:
        raise ValueError("pixel values must lie in [0, 255]")
    return (pooled / 255.0 * np.pi).ravel()


def pool_size(n_qubits: int) -> int:
    try:
        return POOL_SIZES[n_qubits]
    except KeyError:
        raise ValueError(
            "qubit count must be a perfect square in {4,9,16} for pooled encoding") from None


def featurize(raw: RawDataset, n_qubits: int) -> FeatureSet:
    k = pool_size(n_qubits)
    feats = np.array([to_angles(downscale(img, k)) for img in raw.images]).reshape(-1, n_qubits)
    return FeatureSet(feats, raw.labels.astype(np.int64), n_qubits)


def resolve_data_dir(flag: str | None = None) -> Path:
    value = flag or os.environ.get("QHB_DATA_DIR")
    if not value:
        raise FileNotFoundError("no MNIST directory: pass --data-dir or set QHB_DATA_DIR")
    return Path(value)


def _find(data_dir: Path, name: str) -> Path:
    for candidate in (data_dir / name, data_dir / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")


def load_split(data_dir, split: str) -> RawDataset:
    data_dir = Path(data_dir)
    images, labels = MNIST_FILES[split]
    return load_idx(_find(data_dir, images), _find(data_dir, labels))


def load_mnist(data_dir, n_qubits: int, n_train: int = 100, n_test: int = 100,
               stratified: bool = False) -> tuple[FeatureSet, FeatureSet]:
    train = select_subset(load_split(data_dir, "train"), DIGIT_CLASSES, n_train, stratified)
    test = select_subset(load_split(data_dir, "test"), DIGIT_CLASSES, n_test, stratified)
    return featurize(train, n_qubits), featurize(test, n_qubits)


def class_corners(n_features: int) -> np.ndarray:
    """Four distinct corners of [0, pi]^n_features used as blob means."""
    half = np.arange(n_features) < (n_features + 1) // 2
    corners = np.array([np.zeros(n_features), np.ones(n_features), half, ~half], dtype=float)
    return corners * np.pi


def synthetic_dataset(seed: int, n_per_class: int, n_qubits: int = 4,
                      sigma: float = 0.1 * np.pi) -> FeatureSet:
    """Four clipped Gaussian blobs; samples are interleaved by class."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if n_qubits < 2:
        raise ValueError("synthetic blobs need at least 2 features")
    means = class_corners(n_qubits)
    n = 4 * n_per_class
    labels = np.tile(np.arange(4), n_per_class)
    u = uniforms(derive_seed(seed, 0x5EED), 2 * n * n_qubits).reshape(2, n, n_qubits)
    # Box-Muller
    noise = np.sqrt(-2 * np.log1p(-u[0])) * np.cos(2 * np.pi * u[1])
    feats = np.clip(means[labels] + sigma * noise, 0.0, np.pi)
    return FeatureSet(feats, labels, n_qubits)
