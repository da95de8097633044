"""
Binary PPM (P6, maxval 255) format implementation.

This module provides reading and writing of 8-bit RGB images.
"""

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from ...core import BaseDataLoader, DataValidationError

logger = logging.getLogger(__name__)

SUFFIXES = (".ppm",)
_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def decode_ppm(blob: bytes) -> np.ndarray:
    """
    Decode a P6 image.

    Returns:
        uint8 array of shape (H, W, 3)

    Raises:
        DataValidationError: On anything other than a complete P6/255 image
    """
    tokens = []
    offset = 0
    for _ in range(4):
        match = _TOKEN.match(blob, offset)
        if not match:
            raise DataValidationError("Truncated PPM header")
        tokens.append(match.group(1))
        offset = match.end()
    magic, width, height, maxval = tokens
    if magic != b"P6":
        raise DataValidationError(f"Unsupported PPM magic {magic!r}; only binary P6 is read")
    try:
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError:
        raise DataValidationError("Non-numeric PPM header field")
    if maxval != 255:
        raise DataValidationError(f"Unsupported PPM maxval {maxval}; expected 255")
    if width < 1 or height < 1:
        raise DataValidationError(f"Empty PPM image {width}x{height}")
    offset += 1  # single whitespace byte after maxval
    expected = width * height * 3
    pixels = blob[offset:offset + expected]
    if len(pixels) != expected:
        raise DataValidationError(f"PPM payload has {len(pixels)} bytes, expected {expected}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DataValidationError(f"PPM needs uint8 (H, W, 3), got {image.dtype} {image.shape}")
    height, width = image.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes()


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Map a (3, H, W) array in [-1, 1] to uint8 (H, W, 3)."""
    scaled = np.rint((np.clip(image, -1.0, 1.0) + 1.0) * 127.5)
    return scaled.astype(np.uint8).transpose(1, 2, 0)


class PPMLoader(BaseDataLoader):
    """PPM image handler."""

    def load(self) -> Dict[str, Any]:
        """
        Load an image.

        Returns:
            Dictionary with "image" (uint8, H x W x 3)
        """
        self._require_file()
        try:
            with open(self.path, "rb") as f:
                image = decode_ppm(f.read())
            logger.debug(f"Successfully loaded PPM image from {self.path}")
            return {"image": image}
        except DataValidationError as e:
            logger.error(f"Failed to load PPM image from {self.path}: {e}")
            raise

    def save(self, data: Dict[str, Any], path: Optional[Union[str, Path]] = None) -> None:
        """
        Save an image.

        Args:
            data: Dictionary with "image" (uint8, H x W x 3)
            path: Optional path to save to
        """
        save_path = Path(path) if path else self.path
        save_path.parent.mkdir(parents=True, exist_ok=True)
        blob = encode_ppm(data["image"])
        tmp = save_path.with_name(save_path.name + ".tmp")
        with open(tmp, "wb") as f:
            f.write(blob)
        os.replace(tmp, save_path)
        logger.debug(f"Successfully saved PPM image to {save_path}")

    def validate(self, data: Dict[str, Any]) -> bool:
        """
        Validate PPM data structure.

        Args:
            data: Data dictionary to validate

        Returns:
            True if data is valid
        """
        try:
            encode_ppm(data["image"])
            return True
        except (DataValidationError, KeyError) as e:
            logger.warning(f"PPM validation failed: {e}")
            return False


__all__ = ["PPMLoader", "SUFFIXES", "decode_ppm", "encode_ppm", "to_uint8"]
