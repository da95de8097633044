"""
Utility functions for the LFM GAN toolkit.

This module provides dictionary flattening, file hashing and the run
manifest shared by the trainer and the command-line interface.
"""

import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1


def flatten_dict(data: Dict[str, Any], separator: str = ".") -> Dict[str, Any]:
    """
    Collapse nested sections into dot-path keys.

    ``{"lfm": {"mode": "full"}}`` becomes ``{"lfm.mode": "full"}``. Empty
    sections disappear.
    """
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            for sub_key, sub_value in flatten_dict(value, separator).items():
                flat[f"{key}{separator}{sub_key}"] = sub_value
        else:
            flat[key] = value
    return flat


def unflatten_dict(data: Dict[str, Any], separator: str = ".") -> Dict[str, Any]:
    """Inverse of ``flatten_dict``."""
    nested: Dict[str, Any] = {}
    for path, value in data.items():
        *sections, leaf = path.split(separator)
        node = nested
        for section in sections:
            node = node.setdefault(section, {})
        node[leaf] = value
    return nested


def calculate_file_hash(file_path: Union[str, Path], algorithm: str = "sha256") -> str:
    """
    Hex digest of a file, read in 64 KiB blocks.

    Manifests record this for every output so a rerun can be compared
    file by file.
    """
    digest = hashlib.new(algorithm)
    with open(file_path, "rb") as f:
        while block := f.read(65536):
            digest.update(block)
    return digest.hexdigest()


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """Write through a temporary sibling and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def create_manifest(config_text: str, seed: int, version: str, started_at: str,
                    outputs: Iterable[Union[str, Path]], root: Union[str, Path],
                    extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Describe a finished run.

    Args:
        config_text: Resolved configuration as ``key = value`` text
        seed: Resolved run seed
        version: Tool version
        started_at: ISO timestamp of the run start
        outputs: Files produced by the run
        root: Directory output paths are reported relative to
        extra: Additional command-specific fields

    Returns:
        Manifest dictionary listing every output with size and sha256

    Raises:
        FileNotFoundError: If a listed output does not exist
    """
    root = Path(root)
    inventory = []
    for output in sorted({Path(p) for p in outputs}):
        if not output.is_file():
            raise FileNotFoundError(f"Manifest output missing: {output}")
        try:
            name = str(output.relative_to(root))
        except ValueError:
            name = str(output)
        inventory.append({
            "path": name,
            "size": output.stat().st_size,
            "sha256": calculate_file_hash(output),
        })
    manifest = {
        "tool_version": version,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "seed": seed,
        "started_at": started_at,
        "finished_at": utc_timestamp(),
        "config": config_text,
        "outputs": inventory,
    }
    if extra:
        manifest.update(extra)
    return manifest


def save_metadata(metadata: Dict[str, Any], path: Union[str, Path]) -> None:
    """Write a manifest or diagnostic dump as indented JSON."""
    atomic_write_text(path, json.dumps(metadata, indent=2, default=str))
    logger.debug(f"Saved metadata to {path}")


def load_metadata(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


__all__ = [
    "CSV_SCHEMA_VERSION",
    "atomic_write_text",
    "calculate_file_hash",
    "create_manifest",
    "flatten_dict",
    "load_metadata",
    "save_metadata",
    "unflatten_dict",
    "utc_timestamp",
]
