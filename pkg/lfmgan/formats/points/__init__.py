"""
Points CSV format: one header row of column names, then one row per
vector with every float written by ``repr`` so files are reproducible
byte for byte.
"""

import csv
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from ...core import BaseDataLoader, DataValidationError

logger = logging.getLogger(__name__)

SUFFIXES = (".csv",)


def write_points(path: Union[str, Path], points: np.ndarray,
                 columns: Optional[Sequence[str]] = None, prefix: str = "x") -> None:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataValidationError(f"Points must be 2-D (N, D), got shape {points.shape}")
    columns = list(columns) if columns is not None else [f"{prefix}{i}" for i in range(points.shape[1])]
    if len(columns) != points.shape[1]:
        raise DataValidationError(f"{len(columns)} column names for {points.shape[1]} columns")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows([[repr(v) for v in row] for row in points.tolist()])
    os.replace(tmp, path)


def read_points(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataValidationError(f"{path} is empty; expected a header row")
    columns, body = rows[0], rows[1:]
    if any(len(row) != len(columns) for row in body):
        raise DataValidationError(f"{path}: every row needs {len(columns)} values")
    try:
        points = np.array([[float(v) for v in row] for row in body], dtype=np.float64)
    except ValueError as e:
        raise DataValidationError(f"{path}: non-numeric value ({e})")
    points = points.reshape(len(body), len(columns))
    return {"columns": columns, "points": points}


class PointsLoader(BaseDataLoader):
    """Points CSV handler."""

    def load(self) -> Dict[str, Any]:
        """
        Returns:
            Dictionary with "columns" (header names) and "points" (float64, N x D)
        """
        self._require_file()
        data = read_points(self.path)
        logger.debug(f"Loaded {len(data['points'])} points from {self.path}")
        return data

    def save(self, data: Dict[str, Any], path: Optional[Union[str, Path]] = None) -> None:
        save_path = Path(path) if path else self.path
        write_points(save_path, data["points"], data.get("columns"))
        logger.debug(f"Saved {len(data['points'])} points to {save_path}")

    def validate(self, data: Dict[str, Any]) -> bool:
        points = np.asarray(data.get("points"))
        if points.ndim != 2 or not np.issubdtype(points.dtype, np.number):
            logger.warning(f"Points validation failed: shape {points.shape}, dtype {points.dtype}")
            return False
        return bool(np.all(np.isfinite(points)))


__all__ = ["PointsLoader", "SUFFIXES", "read_points", "write_points"]
