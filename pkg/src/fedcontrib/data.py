"""Labeled datasets, the IDX container format, and class-restricted partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, IdxParseError, ShapeError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ShapeError(f"features must be a 2-D matrix, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ShapeError(f"{x.shape[0]} feature rows but labels have shape {y.shape}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ShapeError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int] | np.ndarray) -> LabeledDataset:
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class ClientSpec:
    id: int
    num_samples: int
    class_set: frozenset[int]

    def __post_init__(self) -> None:
        classes = frozenset(int(c) for c in self.class_set)
        if not classes:
            raise ConfigError(f"client {self.id}: class set must be nonempty")
        if min(classes) < 0:
            raise ConfigError(f"client {self.id}: class ids must be >= 0")
        if self.num_samples < 0:
            raise ConfigError(f"client {self.id}: num_samples must be >= 0")
        object.__setattr__(self, "class_set", classes)

    @property
    def variety(self) -> int:
        return len(self.class_set)

    def check_classes(self, num_classes: int) -> None:
        bad = sorted(c for c in self.class_set if c >= num_classes)
        if bad:
            raise ConfigError(f"client {self.id}: classes {bad} outside [0, {num_classes})")


def generate_synthetic(num_classes: int, dim: int, per_class: int, spread: float, seed: int) -> LabeledDataset:
    """Gaussian blobs around uniform random centers in [0.2, 0.8]^dim, clipped to [0, 1].

    Samples are ordered class by class, ``per_class`` of each.
    """
    if num_classes < 2 or dim < 2 or per_class < 1 or not spread > 0:
        raise ConfigError(
            f"need K>=2, dim>=2, per_class>=1, spread>0; got K={num_classes}, dim={dim}, "
            f"per_class={per_class}, spread={spread}"
        )
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(num_classes, dim))
    noise = rng.normal(0.0, spread, size=(num_classes, per_class, dim))
    x = np.clip(centers[:, None, :] + noise, 0.0, 1.0).reshape(num_classes * per_class, dim)
    y = np.repeat(np.arange(num_classes), per_class)
    return LabeledDataset(x, y, num_classes)


def split_per_class(data: LabeledDataset, holdout_per_class: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Move the last ``holdout_per_class`` samples of every class into a second dataset."""
    keep, hold = [], []
    for k in range(data.num_classes):
        idx = np.flatnonzero(data.labels == k)
        if holdout_per_class > idx.size:
            raise CapacityError(f"class {k} has {idx.size} samples, cannot hold out {holdout_per_class}")
        cut = idx.size - holdout_per_class
        keep.append(idx[:cut])
        hold.append(idx[cut:])
    return data.subset(np.concatenate(keep)), data.subset(np.concatenate(hold))


def _read_header(raw: bytes, fields: tuple[str, ...], what: str) -> tuple[int, ...]:
    need = 4 * len(fields)
    if len(raw) < need:
        missing = fields[len(raw) // 4]
        raise IdxParseError(f"truncated {what} file: header ends before field {missing!r}", missing)
    return struct.unpack(">" + "I" * len(fields), raw[:need])


def _read_idx_images(raw: bytes) -> np.ndarray:
    magic, count, rows, cols = _read_header(raw, ("magic", "count", "rows", "cols"), "image")
    if magic != IDX_IMAGES_MAGIC:
        raise IdxParseError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}", "magic")
    size = count * rows * cols
    body = raw[16:]
    if len(body) < size:
        raise IdxParseError(f"truncated image file: need {size} pixel bytes, found {len(body)}", "pixels")
    return np.frombuffer(body, dtype=np.uint8, count=size).reshape(count, rows * cols)


def _read_idx_labels(raw: bytes) -> np.ndarray:
    magic, count = _read_header(raw, ("magic", "count"), "label")
    if magic != IDX_LABELS_MAGIC:
        raise IdxParseError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}", "magic")
    body = raw[8:]
    if len(body) < count:
        raise IdxParseError(f"truncated label file: need {count} label bytes, found {len(body)}", "labels")
    return np.frombuffer(body, dtype=np.uint8, count=count)


def load_idx(images_path: str | Path, labels_path: str | Path, num_classes: int | None = None) -> LabeledDataset:
    """Read an uncompressed IDX image/label file pair.

    Pixels are scaled to [0, 1] by dividing by 255 and each image becomes one
    row-major feature row. ``num_classes`` defaults to ``max(label) + 1``.
    """
    pixels = _read_idx_images(Path(images_path).read_bytes())
    labels = _read_idx_labels(Path(labels_path).read_bytes())
    if pixels.shape[0] != labels.shape[0]:
        raise IdxParseError(
            f"count mismatch: {pixels.shape[0]} images but {labels.shape[0]} labels", "count"
        )
    k = num_classes if num_classes is not None else (int(labels.max()) + 1 if labels.size else 1)
    return LabeledDataset(pixels.astype(np.float64) / 255.0, labels.astype(np.int64), k)


def write_idx(data: LabeledDataset, images_path: str | Path, labels_path: str | Path,
              shape: tuple[int, int] | None = None) -> None:
    """Write ``data`` as an IDX pair; features are quantized to bytes via round(x * 255)."""
    rows, cols = shape if shape is not None else (1, data.dim)
    if rows * cols != data.dim:
        raise ShapeError(f"image shape {rows}x{cols} does not match dim {data.dim}")
    if data.num_classes > 256:
        raise ShapeError("IDX labels are single bytes; at most 256 classes")
    pixels = np.clip(np.rint(data.features * 255.0), 0, 255).astype(np.uint8)
    n = len(data)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, n) + data.labels.astype(np.uint8).tobytes())


def partition_indices(pool: LabeledDataset, specs: Iterable[ClientSpec], seed: int,
                      allow_overlap: bool = False) -> list[np.ndarray]:
    """Pool indices drawn for each client, in ``specs`` order.

    Client ``i`` gets ``num_samples`` indices sampled uniformly without
    replacement from the pool samples whose label is in its class set. Unless
    ``allow_overlap`` is set, indices already handed to an earlier client are
    unavailable to later ones.
    """
    rng = np.random.default_rng(seed)
    taken = np.zeros(len(pool), dtype=bool)
    out = []
    for spec in specs:
        spec.check_classes(pool.num_classes)
        mask = np.isin(pool.labels, sorted(spec.class_set))
        if not allow_overlap:
            mask &= ~taken
        candidates = np.flatnonzero(mask)
        if candidates.size < spec.num_samples:
            raise CapacityError(
                f"client {spec.id} needs {spec.num_samples} samples from classes "
                f"{sorted(spec.class_set)} but only {candidates.size} are available",
                client_id=spec.id,
            )
        picked = rng.choice(candidates, size=spec.num_samples, replace=False)
        taken[picked] = True
        out.append(picked)
    return out


def partition_noniid(pool: LabeledDataset, specs: Sequence[ClientSpec], seed: int,
                     allow_overlap: bool = False) -> list[LabeledDataset]:
    return [pool.subset(idx) for idx in partition_indices(pool, specs, seed, allow_overlap)]
