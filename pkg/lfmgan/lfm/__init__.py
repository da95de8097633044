"""
Latent feature maximization loss and the combined GAN objectives.

Features of a paired batch are split into first halves and second halves;
the regularizer is the absolute summed dot product of the pairs, divided
by the number of pairs and by two. The generator minimizes it; the
discriminator minimizes ``c_max`` minus it. Both total losses are
minimized by their optimizers.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

from .. import autograd as ag
from ..autograd import Tensor
from ..core import ConfigError, LfmMode, LossSide, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class LfmConfig:
    """Weights and constants of the LFM terms."""
    lambda_d: float = 1.0
    lambda_g: float = 1.0
    c_max: float = 100.0
    feature_dim: int = 100
    mode: LfmMode = LfmMode.FULL

    def __post_init__(self):
        self.mode = LfmMode(self.mode)
        self.validate()

    def validate(self) -> None:
        if self.lambda_d < 0 or self.lambda_g < 0:
            raise ConfigError(f"LFM weights must be nonnegative, got {self.lambda_d}, {self.lambda_g}")
        if self.c_max < self.feature_dim / 2:
            raise ConfigError(
                f"c_max={self.c_max} is below feature_dim/2={self.feature_dim / 2}; "
                f"the discriminator-side loss could go negative"
            )

    @property
    def applies_to_d(self) -> bool:
        return self.mode is LfmMode.FULL and self.lambda_d > 0

    @property
    def applies_to_g(self) -> bool:
        return self.mode is not LfmMode.OFF and self.lambda_g > 0


def lfm_base(features: Tensor) -> Tensor:
    """
    |sum_{i<B/2} f_i . f_{i+B/2}| / (B/2) / 2 over flattened feature rows.

    Raises:
        ShapeError: If the batch is odd or empty
    """
    batch = features.shape[0]
    if batch < 2 or batch % 2:
        raise ShapeError(f"LFM needs an even, paired batch; got {batch} rows")
    hb = batch // 2
    rows = ag.flatten(features, 1)
    first = ag.flatten(rows[:hb], 0)
    second = ag.flatten(rows[hb:], 0)
    return ag.tabs(ag.scale(ag.dot(first, second), 1.0 / hb / 2))


def lfm_loss(features: Tensor, side: Union[LossSide, str], cfg: LfmConfig) -> Tensor:
    """Generator side: lfm_base. Discriminator side: c_max - lfm_base."""
    base = lfm_base(features)
    if LossSide(side) is LossSide.GENERATOR:
        return base
    return cfg.c_max - base


def d_total_loss(score_real: Tensor, score_fake: Tensor, feature_f_fake: Optional[Tensor],
                 cfg: LfmConfig) -> Tensor:
    """
    Discriminator objective to minimize.

    bce(D(x), 1) + bce(D(G(z)), 0) + lambda_d * (c_max - lfm_base(f)). The LFM
    term is left out entirely unless the mode is full and lambda_d > 0.
    """
    loss = ag.bce(score_real, 1.0) + ag.bce(score_fake, 0.0)
    if cfg.applies_to_d:
        if feature_f_fake is None:
            raise ShapeError("Discriminator LFM term needs the fake features")
        loss = loss + ag.scale(lfm_loss(feature_f_fake, LossSide.DISCRIMINATOR, cfg), cfg.lambda_d)
    return loss


def g_total_loss(score_fake: Tensor, feature_f_fake: Optional[Tensor], cfg: LfmConfig,
                 saturating: bool = False) -> Tensor:
    """
    Generator objective to minimize.

    Non-saturating bce(D(G(z)), 1) by default; ``saturating`` switches to the
    literal mean log(1 - D(G(z))). Adds lambda_g * lfm_base(f) unless the mode
    is off or lambda_g is zero.
    """
    if saturating:
        loss = -ag.bce(score_fake, 0.0)
    else:
        loss = ag.bce(score_fake, 1.0)
    if cfg.applies_to_g:
        if feature_f_fake is None:
            raise ShapeError("Generator LFM term needs the fake features")
        loss = loss + ag.scale(lfm_loss(feature_f_fake, LossSide.GENERATOR, cfg), cfg.lambda_g)
    return loss


__all__ = [
    "LfmConfig",
    "d_total_loss",
    "g_total_loss",
    "lfm_base",
    "lfm_loss",
]
