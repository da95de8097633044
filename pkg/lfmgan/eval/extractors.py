"""
Feature extractors for the Fréchet distance.

Each extractor maps a batch of samples to an (N, d) float64 matrix, is
deterministic given its tag, and reports its output width.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..core import ShapeError
from ..nets import SplitDiscriminator, eval_mode
from ..nets.layers import Activation, Conv2d, Sequential, INIT_STD

logger = logging.getLogger(__name__)

_CHUNK = 256


class FeatureExtractor:
    """Base extractor; subclasses implement ``_extract`` on one chunk."""

    tag: str = "base"
    dim: Optional[int] = None

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples)
        if samples.shape[0] == 0:
            return np.zeros((0, self.dim or 0))
        chunks = [self._extract(samples[i:i + _CHUNK]) for i in range(0, len(samples), _CHUNK)]
        return np.concatenate(chunks).astype(np.float64)

    def _extract(self, chunk: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(tag={self.tag!r}, dim={self.dim})"


class Identity(FeatureExtractor):
    """Flattened samples; meant for 2-D points."""

    tag = "identity"

    def _extract(self, chunk: np.ndarray) -> np.ndarray:
        flat = chunk.reshape(chunk.shape[0], -1)
        self.dim = flat.shape[1]
        return flat


class FixedRandomCNN(FeatureExtractor):
    """
    Two strided convolutions with leaky ReLU and a spatial mean, weights
    drawn once from N(0, 0.02^2) with a fixed seed. Output width 64.
    """

    dim = 64

    def __init__(self, seed: int = 0, channels: int = 3):
        self.seed = seed
        self.tag = f"fixed_random_cnn:{seed}"
        with ag.default_dtype(np.float64):
            self.net = Sequential(
                Conv2d(channels, 32, 4, 2, 1), Activation("leaky_relu"),
                Conv2d(32, 64, 4, 2, 1), Activation("leaky_relu"),
            )
        rng = np.random.default_rng(seed)
        for layer in (self.net[0], self.net[2]):
            layer.weight.data[...] = rng.normal(0.0, INIT_STD, layer.weight.shape)
        self.net.requires_grad_(False)

    def _extract(self, chunk: np.ndarray) -> np.ndarray:
        if chunk.ndim != 4:
            raise ShapeError(f"fixed_random_cnn expects (N, C, H, W) images, got {chunk.shape}")
        with ag.no_grad():
            out = self.net(Tensor(chunk, dtype=np.float64)).data
        return out.mean(axis=(2, 3))


class TrainedDF(FeatureExtractor):
    """Feature head of a trained discriminator, run in eval mode."""

    def __init__(self, discriminator: SplitDiscriminator, source: str = ""):
        self.discriminator = discriminator
        self.dim = discriminator.feature_dim
        self.tag = f"trained_df:{source}" if source else "trained_df"

    def _extract(self, chunk: np.ndarray) -> np.ndarray:
        net = self.discriminator
        with ag.no_grad(), eval_mode(net):
            raw = net.head_f(net.features(Tensor(chunk, dtype=ag.get_default_dtype())))
        return raw.data.reshape(chunk.shape[0], -1)


def build_extractor(kind: str, seed: int = 0,
                    checkpoint: Optional[Union[str, Path]] = None) -> FeatureExtractor:
    """
    Construct an extractor from its configuration name.

    Args:
        kind: identity, fixed_random_cnn or trained_df
        seed: Weight seed of fixed_random_cnn
        checkpoint: Checkpoint path for trained_df

    Raises:
        ValueError: On an unknown kind or a missing checkpoint
    """
    if kind == "identity":
        return Identity()
    if kind == "fixed_random_cnn":
        return FixedRandomCNN(seed)
    if kind == "trained_df":
        if not checkpoint:
            raise ValueError("trained_df needs a checkpoint")
        from ..train.checkpoint import load_checkpoint  # train depends on eval

        state = load_checkpoint(checkpoint)
        logger.info(f"Using the feature head of {checkpoint} as extractor")
        return TrainedDF(state.discriminator, str(checkpoint))
    raise ValueError(f"Unknown extractor {kind!r}")


__all__ = [
    "FeatureExtractor",
    "FixedRandomCNN",
    "Identity",
    "TrainedDF",
    "build_extractor",
]
