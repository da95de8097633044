"""
Generator and discriminator networks.

The convolutional pair follows the DCGAN stack at 64x64 and drops one
doubling stage per halving of the image size. The discriminator is split:
a shared backbone feeds a classifier head (sigmoid score) and a feature
head (tanh features); in full LFM mode a trainable 1x1 convolution F with
tanh sits on top of the feature head. The MLP pair mirrors the same split
for the 2-D ring benchmark.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..core import LfmMode, ShapeError
from ..latent import LatentBatch
from .layers import (
    Activation,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Linear,
    Module,
    Sequential,
    eval_mode,
    frozen,
    frozen_stats,
    init_weights,
    parameter_fingerprint,
)

logger = logging.getLogger(__name__)

SUPPORTED_SIZES = (16, 32, 64)


def _check_size(image_size: int) -> int:
    if image_size not in SUPPORTED_SIZES:
        raise ValueError(f"Unsupported image size {image_size}; expected one of {SUPPORTED_SIZES}")
    return int(math.log2(image_size))


class GeneratorNet(Module):
    """Transposed-convolution generator mapping (N, z_dim, 1, 1) to (N, 3, S, S)."""

    def __init__(self, z_dim: int = 100, image_size: int = 64, base_channels: int = 64,
                 channels: int = 3):
        super().__init__()
        stages = _check_size(image_size) - 3
        widths = [base_channels * 2 ** i for i in reversed(range(stages + 1))]
        layers = [ConvTranspose2d(z_dim, widths[0], 4, 1, 0, bias=False),
                  BatchNorm2d(widths[0]), Activation("relu")]
        for cin, cout in zip(widths, widths[1:]):
            layers += [ConvTranspose2d(cin, cout, 4, 2, 1, bias=False),
                       BatchNorm2d(cout), Activation("relu")]
        layers += [ConvTranspose2d(widths[-1], channels, 4, 2, 1, bias=True), Activation("tanh")]
        self.z_dim = z_dim
        self.image_size = image_size
        self.main = self.register_module("main", Sequential(*layers))

    def forward(self, z: Tensor) -> Tensor:
        if z.ndim == 2:
            z = z.reshape(z.shape[0], z.shape[1], 1, 1)
        if z.shape[1] != self.z_dim:
            raise ShapeError(f"Latent width {z.shape[1]} does not match z_dim {self.z_dim}")
        return self.main(z)


class SplitDiscriminator(Module):
    """Shared backbone with classifier head, feature head and optional F layer."""

    backbone: Module
    head_c: Module
    head_f: Module
    lfm_f: Optional[Module]

    def __init__(self, mode: LfmMode):
        super().__init__()
        self.mode = LfmMode(mode)
        self.lfm_f = None

    def check_input(self, x: Tensor) -> None:
        pass

    def features(self, x: Tensor) -> Tensor:
        """Backbone output shared by both heads."""
        self.check_input(x)
        return self.backbone(x)

    def apply_f(self, feature_raw: Tensor) -> Tensor:
        return self.lfm_f(feature_raw) if self.lfm_f is not None else feature_raw

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        shared = self.features(x)
        score = self.head_c(shared)
        feature_raw = self.head_f(shared)
        return score, feature_raw, self.apply_f(feature_raw)


class DiscriminatorNet(SplitDiscriminator):
    """Convolutional discriminator down to a 4x4 map, heads to 1x1."""

    def __init__(self, image_size: int = 64, feature_dim: int = 100,
                 mode: Union[LfmMode, str] = LfmMode.FULL, base_channels: int = 64,
                 channels: int = 3):
        super().__init__(mode)
        if feature_dim < 1:
            raise ValueError(f"feature_dim must be positive, got {feature_dim}")
        stages = _check_size(image_size) - 2
        widths = [base_channels * 2 ** i for i in range(stages)]
        layers = [Conv2d(channels, widths[0], 4, 2, 1, bias=False), Activation("leaky_relu")]
        for cin, cout in zip(widths, widths[1:]):
            layers += [Conv2d(cin, cout, 4, 2, 1, bias=False), BatchNorm2d(cout),
                       Activation("leaky_relu")]
        self.image_size = image_size
        self.channels = channels
        self.feature_dim = feature_dim
        self.backbone = self.register_module("backbone", Sequential(*layers))
        self.head_c = self.register_module(
            "head_c", Sequential(Conv2d(widths[-1], 1, 4, 1, 0), Activation("sigmoid"))
        )
        self.head_f = self.register_module(
            "head_f", Sequential(Conv2d(widths[-1], feature_dim, 4, 1, 0), Activation("tanh"))
        )
        if self.mode is LfmMode.FULL:
            self.lfm_f = self.register_module(
                "lfm_f", Sequential(Conv2d(feature_dim, feature_dim, 1, 1, 0), Activation("tanh"))
            )

    def check_input(self, x: Tensor) -> None:
        expected = (self.channels, self.image_size, self.image_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"Discriminator expects (N, {expected}), got {x.shape}")


class MlpGenerator(Module):
    """z_dim -> hidden -> hidden -> out_dim with ReLU and a linear output."""

    def __init__(self, z_dim: int, hidden: int, out_dim: int = 2):
        super().__init__()
        self.z_dim = z_dim
        self.main = self.register_module("main", Sequential(
            Linear(z_dim, hidden), Activation("relu"),
            Linear(hidden, hidden), Activation("relu"),
            Linear(hidden, out_dim),
        ))

    def forward(self, z: Tensor) -> Tensor:
        if z.ndim != 2 or z.shape[1] != self.z_dim:
            raise ShapeError(f"Latent shape {z.shape} does not match z_dim {self.z_dim}")
        return self.main(z)


class MlpDiscriminator(SplitDiscriminator):
    """Fully-connected split discriminator for 2-D points."""

    def __init__(self, hidden: int, f_dim: int, mode: Union[LfmMode, str] = LfmMode.FULL,
                 in_dim: int = 2):
        super().__init__(mode)
        self.in_dim = in_dim
        self.feature_dim = f_dim
        self.backbone = self.register_module("backbone", Sequential(
            Linear(in_dim, hidden), Activation("leaky_relu"),
            Linear(hidden, hidden), Activation("leaky_relu"),
        ))
        self.head_c = self.register_module(
            "head_c", Sequential(Linear(hidden, 1), Activation("sigmoid"))
        )
        self.head_f = self.register_module(
            "head_f", Sequential(Linear(hidden, f_dim), Activation("tanh"))
        )
        if self.mode is LfmMode.FULL:
            self.lfm_f = self.register_module(
                "lfm_f", Sequential(Linear(f_dim, f_dim), Activation("tanh"))
            )

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"Discriminator expects (N, {self.in_dim}), got {x.shape}")


@dataclass
class MlpGanPair:
    generator: MlpGenerator
    discriminator: MlpDiscriminator


def build_generator(z_dim: int = 100, image_size: int = 64, base_channels: int = 64,
                    seed: Optional[int] = None) -> GeneratorNet:
    """
    Build the convolutional generator, DCGAN-initialized when a seed is given.

    Raises:
        ValueError: If image_size is not 16, 32 or 64
    """
    net = GeneratorNet(z_dim, image_size, base_channels)
    if seed is not None:
        init_weights(net, np.random.default_rng(seed))
    return net


def build_discriminator(image_size: int = 64, feature_dim: int = 100,
                        mode: Union[LfmMode, str] = LfmMode.FULL, base_channels: int = 64,
                        seed: Optional[int] = None) -> DiscriminatorNet:
    """
    Build the split convolutional discriminator.

    The F layer exists only in full mode.
    """
    net = DiscriminatorNet(image_size, feature_dim, mode, base_channels)
    if seed is not None:
        init_weights(net, np.random.default_rng(seed))
    return net


def build_mlp_gan(z_dim: int, hidden: int, f_dim: int, mode: Union[LfmMode, str],
                  seed: int) -> MlpGanPair:
    """Build and initialize the fully-connected pair used for 2-D data."""
    if min(z_dim, hidden, f_dim) < 1:
        raise ValueError("MLP dimensions must be positive")
    rng = np.random.default_rng(seed)
    generator = init_weights(MlpGenerator(z_dim, hidden), rng)
    discriminator = init_weights(MlpDiscriminator(hidden, f_dim, mode), rng)
    return MlpGanPair(generator, discriminator)


def _latent_tensor(z: Union[LatentBatch, np.ndarray, Tensor]) -> Tensor:
    if isinstance(z, Tensor):
        return z
    values = z.values if isinstance(z, LatentBatch) else np.asarray(z)
    return Tensor(values.astype(ag.get_default_dtype()))


def forward_g(net: Module, z: Union[LatentBatch, np.ndarray, Tensor]) -> Tensor:
    """Generate samples from latent codes; differentiable w.r.t. generator parameters."""
    return net(_latent_tensor(z))


def forward_d(net: SplitDiscriminator, x: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Run the split discriminator.

    Returns:
        (score, feature_raw, feature_f); feature_f is feature_raw when there
        is no F layer
    """
    return net(x)


__all__ = [
    "DiscriminatorNet",
    "GeneratorNet",
    "MlpDiscriminator",
    "MlpGanPair",
    "MlpGenerator",
    "Module",
    "SUPPORTED_SIZES",
    "SplitDiscriminator",
    "build_discriminator",
    "build_generator",
    "build_mlp_gan",
    "eval_mode",
    "forward_d",
    "forward_g",
    "frozen",
    "frozen_stats",
    "init_weights",
    "parameter_fingerprint",
]
