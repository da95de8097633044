"""
LFM GAN - Main Package

GAN training with latent feature maximization: orthogonal latent pairs,
the feature dot-product regularizer, DCGAN and MLP networks on a small
numpy autograd engine, and Frechet-distance evaluation.
"""

__version__ = "0.1.0"
__author__ = "LFM GAN Team"

from .config import Config, TrainConfig
from .core import (
    BaseDataLoader,
    CheckpointError,
    ConfigError,
    DataValidationError,
    DScope,
    EvaluationError,
    FormatType,
    LfmError,
    LfmMode,
    LossSide,
    NumericalError,
    PairVariant,
    ShapeError,
)
from .eval import GaussianStats, frechet_distance
from .latent import LatentBatch, orthogonal_pairs, rejection_rate
from .lfm import LfmConfig, d_total_loss, g_total_loss, lfm_loss
from .train import TrainState, load_checkpoint, save_checkpoint, train, train_step

__all__ = [
    "BaseDataLoader",
    "CheckpointError",
    "Config",
    "ConfigError",
    "DScope",
    "DataValidationError",
    "EvaluationError",
    "FormatType",
    "GaussianStats",
    "LatentBatch",
    "LfmConfig",
    "LfmError",
    "LfmMode",
    "LossSide",
    "NumericalError",
    "PairVariant",
    "ShapeError",
    "TrainConfig",
    "TrainState",
    "d_total_loss",
    "frechet_distance",
    "g_total_loss",
    "lfm_loss",
    "load_checkpoint",
    "orthogonal_pairs",
    "rejection_rate",
    "save_checkpoint",
    "train",
    "train_step",
]
