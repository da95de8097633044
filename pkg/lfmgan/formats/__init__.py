"""
On-disk format implementations for the LFM GAN toolkit.

Three formats are supported: binary PPM images, points CSV files and the
tensor-record container used for checkpoints, statistics caches and
raw-tensor datasets. ``loader_for`` picks the handler for a path.
"""

from pathlib import Path
from typing import Dict, Type, Union

from ..core import BaseDataLoader, FormatType
from .points import PointsLoader, read_points, write_points
from .ppm import PPMLoader, decode_ppm, encode_ppm, to_uint8
from .records import (
    MAGIC,
    RecordFile,
    RecordsLoader,
    decode_records,
    encode_records,
    read_records,
    write_records,
)

_LOADERS: Dict[FormatType, Type[BaseDataLoader]] = {
    FormatType.PPM: PPMLoader,
    FormatType.RECORDS: RecordsLoader,
    FormatType.POINTS: PointsLoader,
}

_SUFFIXES = {
    ".ppm": FormatType.PPM,
    ".csv": FormatType.POINTS,
    ".lfmt": FormatType.RECORDS,
    ".ckpt": FormatType.RECORDS,
    ".stats": FormatType.RECORDS,
}

_MAGICS = {
    MAGIC: FormatType.RECORDS,
    b"P6": FormatType.PPM,
}


def detect_format(path: Union[str, Path]) -> FormatType:
    """
    Detect a file's format from its suffix, or else from its leading bytes.

    Args:
        path: Path to file

    Returns:
        Detected format type

    Raises:
        ValueError: If neither the suffix nor the content is recognized
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in _SUFFIXES:
        return _SUFFIXES[suffix]
    if path.is_file():
        with open(path, "rb") as f:
            head = f.read(4)
        for magic, format_type in _MAGICS.items():
            if head.startswith(magic):
                return format_type
    raise ValueError(f"Cannot detect format of {path}; known suffixes: {sorted(_SUFFIXES)}")


def loader_for(path: Union[str, Path], format_type: FormatType = FormatType.AUTO) -> BaseDataLoader:
    if format_type is FormatType.AUTO:
        format_type = detect_format(path)
    return _LOADERS[format_type](path)


__all__ = [
    "PPMLoader",
    "PointsLoader",
    "RecordFile",
    "RecordsLoader",
    "decode_ppm",
    "decode_records",
    "detect_format",
    "encode_ppm",
    "encode_records",
    "loader_for",
    "read_points",
    "read_records",
    "to_uint8",
    "write_points",
    "write_records",
]
