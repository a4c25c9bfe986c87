"""Dataset ingestion and evaluation plumbing: IDX and raw-tensor containers,
sample-wise normalization, occlusion masks, occluded-region MSE and PGM
output."""

import gzip
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "ImageDataset",
    "load_idx",
    "save_idx",
    "load_raw_tensor",
    "save_raw_tensor",
    "normalize_samplewise",
    "normalize_observed",
    "denormalize",
    "apply_occlusion",
    "mse_occluded",
    "write_pgm",
    "read_pgm",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
RAW_MAGIC = b"SPNT"
OCCLUSIONS = ("left", "bottom", "none")


@dataclass
class ImageDataset:
    """8-bit image stack plus optional labels and per-sample stats."""

    images: np.ndarray  # (N, H, W) uint8
    labels: Optional[np.ndarray] = None  # (N,) int64
    mean: Optional[np.ndarray] = None  # per-sample normalization stats
    std: Optional[np.ndarray] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        if self.images.ndim != 3:
            raise ValueError(f"images must be (N, H, W), got {self.images.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.images.shape[0],):
                raise ValueError(
                    f"{self.labels.shape[0]} labels for {self.images.shape[0]} images")

    def __len__(self):
        return self.images.shape[0]

    @property
    def grid(self):
        return self.images.shape[1], self.images.shape[2]

    def subset(self, indices) -> "ImageDataset":
        labels = None if self.labels is None else self.labels[indices]
        return ImageDataset(self.images[indices], labels)


def _open_maybe_gzip(path, mode="rb"):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_exact(f, n, path):
    data = f.read(n)
    if len(data) != n:
        raise ValueError(f"{path}: truncated file (wanted {n} bytes at "
                         f"offset {f.tell() - len(data)}, got {len(data)})")
    return data


def load_idx(images_path, labels_path=None) -> ImageDataset:
    """Parse big-endian IDX image (and optionally label) files; .gz
    transparently accepted by suffix."""
    with _open_maybe_gzip(images_path) as f:
        magic, n, h, w = struct.unpack(">IIII", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"{images_path}: bad image magic 0x{magic:08x} at offset 0 "
                             f"(expected 0x{IDX_IMAGE_MAGIC:08x})")
        pixels = np.frombuffer(_read_exact(f, n * h * w, images_path), dtype=np.uint8)
        images = pixels.reshape(n, h, w)
    labels = None
    if labels_path is not None:
        with _open_maybe_gzip(labels_path) as f:
            magic, n_labels = struct.unpack(">II", _read_exact(f, 8, labels_path))
            if magic != IDX_LABEL_MAGIC:
                raise ValueError(f"{labels_path}: bad label magic 0x{magic:08x} at offset 0 "
                                 f"(expected 0x{IDX_LABEL_MAGIC:08x})")
            labels = np.frombuffer(_read_exact(f, n_labels, labels_path), dtype=np.uint8)
            labels = labels.astype(np.int64)
        if n_labels != n:
            raise ValueError(f"{n_labels} labels for {n} images")
    return ImageDataset(images=images, labels=labels)


def save_idx(dataset: ImageDataset, images_path, labels_path=None):
    n, h, w = dataset.images.shape
    with _open_maybe_gzip(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        f.write(dataset.images.tobytes())
    if labels_path is not None:
        if dataset.labels is None:
            raise ValueError("dataset has no labels to save")
        with _open_maybe_gzip(labels_path, "wb") as f:
            f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
            f.write(dataset.labels.astype(np.uint8).tobytes())


def load_raw_tensor(path) -> ImageDataset:
    """Little-endian raw container: magic "SPNT", u32 version, u32 N, u32 H,
    u32 W, then N*H*W bytes (for externally prepared crops)."""
    with _open_maybe_gzip(path) as f:
        magic = _read_exact(f, 4, path)
        if magic != RAW_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r} at offset 0")
        version, n, h, w = struct.unpack("<IIII", _read_exact(f, 16, path))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        pixels = np.frombuffer(_read_exact(f, n * h * w, path), dtype=np.uint8)
    return ImageDataset(images=pixels.reshape(n, h, w))


def save_raw_tensor(dataset: ImageDataset, path):
    n, h, w = dataset.images.shape
    with _open_maybe_gzip(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<IIII", 1, n, h, w))
        f.write(dataset.images.tobytes())


def normalize_samplewise(images) -> tuple:
    """Per image: subtract its mean, divide by its (population) std.

    Returns (normalized float array, mean, std); constant images get std 1.
    """
    images = np.asarray(images, dtype=np.float64)
    squeeze = images.ndim == 2
    if squeeze:
        images = images[None]
    mean = images.mean(axis=(1, 2))
    std = images.std(axis=(1, 2))
    std = np.where(std > 0, std, 1.0)
    normalized = (images - mean[:, None, None]) / std[:, None, None]
    if squeeze:
        return normalized[0], float(mean[0]), float(std[0])
    return normalized, mean, std


def denormalize(values, mean, std) -> np.ndarray:
    return np.asarray(values) * std + mean


def normalize_observed(image, mask) -> tuple:
    """Sample stats from the observed pixels only (the hidden half does not
    exist at prediction time)."""
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    visible = image[mask]
    if visible.size == 0:
        raise ValueError("cannot normalize a fully hidden image")
    mean = float(visible.mean())
    std = float(visible.std())
    if std == 0.0:
        std = 1.0
    return (image - mean) / std, mean, std


def apply_occlusion(grid_shape, kind: str) -> np.ndarray:
    """Evidence mask for an occlusion: True = observed.

    left hides columns [0, W//2); bottom hides rows [ceil(H/2), H); for odd
    dimensions the occluded region is the smaller half.
    """
    h, w = grid_shape
    mask = np.ones((h, w), dtype=bool)
    if kind == "left":
        mask[:, :w // 2] = False
    elif kind == "bottom":
        if h // 2 > 0:
            mask[h - h // 2:, :] = False
    elif kind != "none":
        raise ValueError(f"occlusion must be one of {OCCLUSIONS}, got {kind!r}")
    return mask


def mse_occluded(predicted, original, mask) -> float:
    """Mean squared error over the hidden pixels only, in [0, 255] units."""
    predicted = np.asarray(predicted, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    hidden = ~np.asarray(mask, dtype=bool)
    if not hidden.any():
        raise ValueError("no hidden pixels to score")
    if predicted.ndim == 3:
        diff = predicted[:, hidden] - original[:, hidden]
    else:
        diff = predicted[hidden] - original[hidden]
    return float(np.mean(diff * diff))


def write_pgm(image, path):
    """8-bit binary PGM (P5)."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"P5":
            raise ValueError(f"{path}: not a binary PGM")
        line = f.readline()
        while line.startswith(b"#"):
            line = f.readline()
        w, h = map(int, line.split())
        maxval = int(f.readline())
        if maxval != 255:
            raise ValueError(f"{path}: only 8-bit PGM supported")
        data = np.frombuffer(f.read(h * w), dtype=np.uint8)
    return data.reshape(h, w)
