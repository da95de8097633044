"""
Dataset ingestion for training and evaluation.

Two sources feed the trainer: a synthetic ring of Gaussians in 2-D, and
small image folders (binary PPM files or one tensor-record file). Both are
read through ``BatchStream``, which hands out fixed-size batches in a
seed-determined order and can prefetch on a background thread without
changing that order.
"""

import logging
import math
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from ..core import DataValidationError, ShapeError
from ..formats import decode_ppm, read_records

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".ppm",)

Cursor = Tuple[int, int]


def center_crop_resize(image: np.ndarray, target: int) -> np.ndarray:
    """
    Crop the centered largest square and resize it bilinearly.

    Sampling is center-aligned: output pixel i reads source coordinate
    (i + 0.5) * scale - 0.5, clamped to the image.

    Args:
        image: (H, W, C) array
        target: Output side length

    Returns:
        float64 array of shape (target, target, C)
    """
    if image.ndim != 3 or min(image.shape[:2]) < 1:
        raise ShapeError(f"Expected a non-empty (H, W, C) image, got shape {image.shape}")
    if target < 1:
        raise ValueError(f"target must be positive, got {target}")
    height, width = image.shape[:2]
    side = min(height, width)
    top = (height - side) // 2
    left = (width - side) // 2
    square = image[top:top + side, left:left + side].astype(np.float64)
    if side == target:
        return square

    coords = (np.arange(target) + 0.5) * (side / target) - 0.5
    coords = np.clip(coords, 0.0, side - 1)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, side - 1)
    frac = coords - lo

    rows = square[lo] * (1 - frac)[:, None, None] + square[hi] * frac[:, None, None]
    return rows[:, lo] * (1 - frac)[None, :, None] + rows[:, hi] * frac[None, :, None]


def normalize_pixels(image: np.ndarray) -> np.ndarray:
    """[0, 255] -> [-1, 1]."""
    return image / 127.5 - 1.0


class Dataset:
    """Anything that can lay out one epoch of samples for a seed."""

    def __len__(self) -> int:
        raise NotImplementedError

    def epoch(self, epoch: int, seed: int) -> np.ndarray:
        raise NotImplementedError


@dataclass
class ImageDataset(Dataset):
    """Decoded images as (N, 3, S, S) float32 in [-1, 1]."""
    path: Path
    files: List[Path]
    image_size: int
    subset_n: int
    images: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.images.shape[0]

    def epoch(self, epoch: int, seed: int) -> np.ndarray:
        """Images in the permutation drawn for this epoch."""
        order = np.random.default_rng([seed, epoch]).permutation(len(self))
        return self.images[order]


def _prepare(pixels: np.ndarray, image_size: int) -> np.ndarray:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DataValidationError(f"Expected an RGB (H, W, 3) image, got shape {pixels.shape}")
    resized = center_crop_resize(pixels, image_size)
    return normalize_pixels(resized).transpose(2, 0, 1).astype(np.float32)


def load_image_folder(path: Union[str, Path], image_size: int = 64,
                      subset_n: int = 0) -> ImageDataset:
    """
    Load a small image dataset.

    ``path`` is either a directory of binary PPM files, read in
    lexicographic file-name order, or a tensor-record file holding an
    ``images`` tensor of uint8 (N, H, W, 3). Undecodable files are skipped
    with a warning.

    Args:
        path: Directory or record file
        image_size: Side length after center crop and resize
        subset_n: Keep only the first subset_n decodable images (0 keeps all)

    Returns:
        ImageDataset

    Raises:
        DataValidationError: If no image could be decoded
        FileNotFoundError: If the path does not exist
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Path does not exist: {path}")

    images: List[np.ndarray] = []
    files: List[Path] = []
    if path.is_dir():
        candidates = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        for file in candidates:
            if subset_n and len(images) >= subset_n:
                break
            try:
                images.append(_prepare(decode_ppm(file.read_bytes()), image_size))
                files.append(file)
            except (DataValidationError, ShapeError) as e:
                logger.warning(f"Skipping undecodable image {file}: {e}")
    else:
        tensors = read_records(path).tensors
        if "images" not in tensors:
            raise DataValidationError(f"Record file {path} has no 'images' tensor")
        raw = tensors["images"]
        if raw.dtype != np.uint8 or raw.ndim != 4:
            raise DataValidationError(f"'images' must be uint8 (N, H, W, 3), got {raw.dtype} {raw.shape}")
        count = len(raw) if not subset_n else min(subset_n, len(raw))
        images = [_prepare(raw[i], image_size) for i in range(count)]
        files = [path] * count

    if not images:
        raise DataValidationError(f"No decodable images found in {path}")
    logger.info(f"Loaded {len(images)} images of size {image_size} from {path}")
    return ImageDataset(path, files, image_size, subset_n, np.stack(images))


@dataclass
class RingDataset(Dataset):
    """Mixture of K isotropic Gaussians spaced evenly on a circle."""
    modes: int = 8
    radius: float = 2.0
    sigma: float = 0.05
    n: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError(f"Ring needs at least one mode, got {self.modes}")
        if self.sigma <= 0:
            raise ValueError(f"Ring sigma must be positive, got {self.sigma}")

    def __len__(self) -> int:
        return self.n

    @property
    def centers(self) -> np.ndarray:
        angles = 2 * math.pi * np.arange(self.modes) / self.modes
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        labels = rng.integers(0, self.modes, size=count)
        return self.centers[labels] + self.sigma * rng.standard_normal((count, 2))

    def epoch(self, epoch: int, seed: Optional[int] = None) -> np.ndarray:
        """Fresh draw of n points; a stream seed overrides the ring seed."""
        seed = self.seed if seed is None else seed
        return self.sample(self.n, np.random.default_rng([seed, epoch]))


def ring_gaussians(ring: RingDataset, batch_size: int) -> Iterator[np.ndarray]:
    """Endless stream of (batch_size, 2) batches, deterministic per ring seed."""
    stream = BatchStream(ring, batch_size, ring.seed)
    while True:
        yield stream.next_batch()


_DONE = object()


class BatchStream:
    """
    Ordered batches over successive epochs.

    The cursor (epoch, batches taken in that epoch) identifies the next
    batch and is what checkpoints store. Incomplete trailing batches are
    dropped. With ``prefetch`` > 0 a background thread assembles batches
    into a bounded queue; the consumer sees the same order either way.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: int,
                 cursor: Cursor = (0, 0), prefetch: int = 0, dtype=np.float32):
        if len(dataset) < batch_size:
            raise DataValidationError(
                f"Dataset has {len(dataset)} samples, fewer than the batch size {batch_size}"
            )
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.dtype = dtype
        self.cursor: Cursor = tuple(cursor)
        self._iter: Optional[Iterator[Tuple[Cursor, np.ndarray]]] = None
        self._queue: Optional[queue.Queue] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        if prefetch > 0:
            self._queue = queue.Queue(maxsize=prefetch)
            self._thread = threading.Thread(
                target=self._fill, args=(self.cursor,), name="lfmgan-prefetch", daemon=True
            )
            self._thread.start()

    def _generate(self, cursor: Cursor) -> Iterator[Tuple[Cursor, np.ndarray]]:
        epoch, position = cursor
        per_epoch = len(self.dataset) // self.batch_size
        while True:
            if position < per_epoch:
                data = self.dataset.epoch(epoch, self.seed)
                while position < per_epoch:
                    start = position * self.batch_size
                    batch = np.ascontiguousarray(data[start:start + self.batch_size], dtype=self.dtype)
                    position += 1
                    yield (epoch, position), batch
            epoch, position = epoch + 1, 0

    def _fill(self, cursor: Cursor) -> None:
        try:
            for item in self._generate(cursor):
                while not self._stop.is_set():
                    try:
                        self._queue.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if self._stop.is_set():
                    return
        except Exception as e:  # surfaced to the consumer
            self._queue.put((_DONE, e))

    def next_batch(self) -> np.ndarray:
        if self._queue is None:
            if self._iter is None:
                self._iter = self._generate(self.cursor)
            cursor, batch = next(self._iter)
        else:
            cursor, batch = self._queue.get()
            if cursor is _DONE:
                raise batch
        self.cursor = cursor
        return batch

    def close(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "BatchStream":
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.close()


def build_dataset(data_kind: str, seed: int, *, path: Optional[str] = None, image_size: int = 64,
                  subset_n: int = 0, ring_modes: int = 8, ring_radius: float = 2.0,
                  ring_sigma: float = 0.05, ring_n: int = 10000) -> Dataset:
    """Construct the dataset named by ``data_kind`` (ring or images)."""
    if data_kind == "ring":
        return RingDataset(ring_modes, ring_radius, ring_sigma, ring_n, seed)
    if data_kind == "images":
        if not path:
            raise DataValidationError("Image datasets need a path")
        return load_image_folder(path, image_size, subset_n)
    raise ValueError(f"Unknown data kind {data_kind!r}")


__all__ = [
    "BatchStream",
    "Dataset",
    "ImageDataset",
    "RingDataset",
    "build_dataset",
    "center_crop_resize",
    "load_image_folder",
    "normalize_pixels",
    "ring_gaussians",
]
