"""
Core definitions for the LFM GAN toolkit.

This module defines the enums, the exception hierarchy and the base format
handler shared by every subpackage.
"""

from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Union


class LfmMode(Enum):
    """Where the latent feature maximization term is applied."""
    FULL = "full"
    G_ONLY = "g_only"
    OFF = "off"


class PairVariant(Enum):
    """Acceptance rule for the last coordinate of an orthogonal pair."""
    ABS = "abs"
    NO_ABS = "no_abs"
    PLAIN_RANDOM = "plain_random"

    def accepts(self, last):
        """
        Vectorized acceptance test for candidate last coordinates.

        Args:
            last: Array of solved last coordinates

        Returns:
            Boolean array, True where the candidate is kept
        """
        if self is PairVariant.ABS:
            return abs(last) <= 1.0
        if self is PairVariant.NO_ABS:
            return last <= 1.0
        raise ValueError("plain_random batches are not built from pairs")


class LossSide(Enum):
    """Which network an LFM loss value is computed for."""
    GENERATOR = "generator"
    DISCRIMINATOR = "discriminator"


class DScope(Enum):
    """Parameters reached by the LFM gradient during the discriminator step."""
    FULL = "full"
    F_ONLY = "f_only"


class FormatType(Enum):
    """Supported on-disk formats."""
    PPM = "ppm"
    RECORDS = "records"
    POINTS = "points"
    AUTO = "auto"


class LfmError(Exception):
    """Base class for all toolkit errors."""
    pass


class ConfigError(LfmError, ValueError):
    """Raised when a configuration key or value is invalid."""
    pass


class ShapeError(LfmError, ValueError):
    """Raised when tensor shapes or lengths do not line up."""
    pass


class NumericalError(LfmError, ArithmeticError):
    """Raised when a loss or activation becomes NaN or infinite."""
    pass


class DataValidationError(LfmError):
    """Raised when input data is malformed or undecodable."""
    pass


class CheckpointError(DataValidationError):
    """Raised when a record file is corrupt or has the wrong version."""
    pass


class EvaluationError(LfmError):
    """Raised when a Fréchet or coverage computation cannot be carried out."""
    pass


class BaseDataLoader(ABC):
    """
    One file in one of the toolkit's formats.

    Subclasses map the file to a dictionary of named arrays and back.
    ``validate`` checks a dictionary before it is written.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    @abstractmethod
    def load(self) -> Dict[str, Any]:
        """Read the file into named arrays."""

    @abstractmethod
    def save(self, data: Dict[str, Any], path: Optional[Union[str, Path]] = None) -> None:
        """Write named arrays, to ``path`` or else back to ``self.path``."""

    @abstractmethod
    def validate(self, data: Dict[str, Any]) -> bool:
        """True when ``data`` can be written in this format."""

    def _require_file(self) -> None:
        if not self.path.exists():
            raise FileNotFoundError(f"Path does not exist: {self.path}")

    def get_metadata(self) -> Dict[str, Any]:
        """Path, handler name and size in bytes (None for directories)."""
        return {
            "path": str(self.path),
            "format": type(self).__name__,
            "size": self.path.stat().st_size if self.path.is_file() else None,
        }
