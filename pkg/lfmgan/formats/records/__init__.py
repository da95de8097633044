"""
Tensor-record container used for checkpoints, statistics caches and
raw-tensor datasets.

Layout (little-endian):
    b"LFMG" | u32 version | u32 header length | header (utf-8 text)
    then per tensor: u32 name length | name | u8 dtype tag | u32 rank |
    rank x u64 extents | payload
    and finally u32 CRC32 of every preceding byte.
"""

import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from ...core import BaseDataLoader, CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"LFMG"
VERSION = 1
SUFFIX = ".lfmt"

_DTYPE_TAGS = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i8"): 2,
    np.dtype("u1"): 3,
    np.dtype("<i4"): 4,
}
_TAG_DTYPES = {tag: dtype for dtype, tag in _DTYPE_TAGS.items()}


@dataclass
class RecordFile:
    """Header text plus named arrays, in file order."""
    header: str = ""
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)


def encode_records(record: RecordFile, version: int = VERSION) -> bytes:
    header = record.header.encode("utf-8")
    parts = [MAGIC, struct.pack("<II", version, len(header)), header]
    for name, array in record.tensors.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder("<") if array.dtype.itemsize > 1 else array.dtype
        if dtype not in _DTYPE_TAGS:
            raise CheckpointError(f"Unsupported dtype {array.dtype} for record {name}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BI", _DTYPE_TAGS[dtype], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_records(blob: bytes, expected_version: int = VERSION) -> RecordFile:
    """
    Parse a record blob.

    Raises:
        CheckpointError: On bad magic, CRC mismatch, version mismatch or a
            malformed record
    """
    if len(blob) < len(MAGIC) + 12 or blob[:4] != MAGIC:
        raise CheckpointError("Not a record file (bad magic or too short)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("Record file checksum mismatch (corrupt or truncated)")
    version, header_len = struct.unpack_from("<II", body, 4)
    if version != expected_version:
        raise CheckpointError(f"Record file version {version}, expected {expected_version}")
    offset = 12
    header = body[offset:offset + header_len].decode("utf-8")
    offset += header_len
    tensors: Dict[str, np.ndarray] = {}
    try:
        while offset < len(body):
            (name_len,) = struct.unpack_from("<I", body, offset)
            offset += 4
            name = body[offset:offset + name_len].decode("utf-8")
            offset += name_len
            tag, rank = struct.unpack_from("<BI", body, offset)
            offset += 5
            shape = struct.unpack_from(f"<{rank}Q", body, offset)
            offset += 8 * rank
            dtype = _TAG_DTYPES[tag]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(body):
                raise CheckpointError(f"Record {name} runs past the end of the file")
            tensors[name] = np.frombuffer(body, dtype=dtype, count=nbytes // dtype.itemsize,
                                          offset=offset).reshape(shape).copy()
            offset += nbytes
    except (struct.error, KeyError, UnicodeDecodeError) as e:
        raise CheckpointError(f"Malformed record file: {e}")
    return RecordFile(header, tensors)


def write_records(path: Union[str, Path], record: RecordFile) -> None:
    """Write atomically: a temporary sibling file is renamed into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(encode_records(record))
    os.replace(tmp, path)


def read_records(path: Union[str, Path]) -> RecordFile:
    with open(path, "rb") as f:
        return decode_records(f.read())


class RecordsLoader(BaseDataLoader):
    """Tensor-record file handler."""

    def load(self) -> Dict[str, Any]:
        """
        Load a record file.

        Returns:
            Dictionary with "header" text and "tensors" mapping
        """
        self._require_file()
        try:
            record = read_records(self.path)
            logger.info(f"Successfully loaded {len(record.tensors)} records from {self.path}")
            return {"header": record.header, "tensors": record.tensors}
        except CheckpointError as e:
            logger.error(f"Failed to load records from {self.path}: {e}")
            raise

    def save(self, data: Dict[str, Any], path: Optional[Union[str, Path]] = None) -> None:
        """
        Save a record file.

        Args:
            data: Dictionary with "header" text and "tensors" mapping
            path: Optional path to save to
        """
        save_path = Path(path) if path else self.path
        try:
            write_records(save_path, RecordFile(data.get("header", ""), dict(data["tensors"])))
            logger.info(f"Successfully saved records to {save_path}")
        except (OSError, CheckpointError) as e:
            logger.error(f"Failed to save records to {save_path}: {e}")
            raise

    def validate(self, data: Dict[str, Any]) -> bool:
        """
        Validate that data can be encoded as records.

        Args:
            data: Data dictionary to validate

        Returns:
            True if data is valid
        """
        try:
            encode_records(RecordFile(data.get("header", ""), dict(data["tensors"])))
            return True
        except (CheckpointError, KeyError, TypeError) as e:
            logger.warning(f"Records validation failed: {e}")
            return False


__all__ = [
    "MAGIC",
    "RecordFile",
    "RecordsLoader",
    "SUFFIX",
    "VERSION",
    "decode_records",
    "encode_records",
    "read_records",
    "write_records",
]
