"""
Training state: both networks, their optimizers, the latent stream and
the metric history.
"""

import logging
import math
from dataclasses import dataclass, field, fields
from typing import List, Optional, Tuple

import numpy as np

from .. import autograd as ag
from ..autograd import Adam
from ..config import TrainConfig
from ..lfm import LfmConfig
from ..nets import (
    Module,
    SplitDiscriminator,
    build_discriminator,
    build_generator,
    build_mlp_gan,
    init_weights,
)

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration", "loss_d", "loss_g", "lfm_value", "d_real_mean", "d_fake_mean", "fid", "wall_ms",
)


@dataclass
class StepMetrics:
    """One metrics row; lfm_value and fid are None when not computed."""
    iteration: int
    loss_d: float
    loss_g: float
    lfm_value: Optional[float]
    d_real_mean: float
    d_fake_mean: float
    fid: Optional[float] = None
    wall_ms: float = 0.0

    def as_row(self) -> List[str]:
        row = []
        for f in fields(self):
            value = getattr(self, f.name)
            row.append("" if value is None else repr(value))
        return row

    def as_array(self) -> np.ndarray:
        return np.array([math.nan if getattr(self, c) is None else getattr(self, c)
                         for c in METRIC_COLUMNS], dtype=np.float64)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "StepMetrics":
        items = [None if math.isnan(v) else float(v) for v in values]
        items[0] = int(items[0])
        return cls(*items)


@dataclass
class TrainState:
    config: TrainConfig
    generator: Module
    discriminator: SplitDiscriminator
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator
    iteration: int = 0
    cursor: Tuple[int, int] = (0, 0)
    history: List[StepMetrics] = field(default_factory=list)

    @property
    def lfm(self) -> LfmConfig:
        cfg = self.config
        return LfmConfig(cfg.lambda_d, cfg.lambda_g, cfg.c_max, cfg.feature_dim, cfg.lfm_mode)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.config.dtype)


def build_networks(cfg: TrainConfig) -> Tuple[Module, SplitDiscriminator]:
    """Construct and initialize the pair named by ``model.kind`` in the current dtype."""
    if cfg.model_kind == "mlp":
        pair = build_mlp_gan(cfg.z_dim, cfg.hidden, cfg.feature_dim, cfg.lfm_mode, cfg.seed)
        return pair.generator, pair.discriminator
    generator = build_generator(cfg.z_dim, cfg.image_size, cfg.base_channels)
    discriminator = build_discriminator(cfg.image_size, cfg.feature_dim, cfg.lfm_mode,
                                        cfg.base_channels)
    init_weights(generator, np.random.default_rng([cfg.seed, 0]))
    init_weights(discriminator, np.random.default_rng([cfg.seed, 1]))
    return generator, discriminator


def _adam(net: Module, cfg: TrainConfig) -> Adam:
    return Adam(net.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def build_state(cfg: TrainConfig) -> TrainState:
    """
    Fresh state for a run.

    Must be called inside ``autograd.default_dtype(cfg.dtype)`` so that
    parameters take the configured precision.
    """
    cfg.validate()
    generator, discriminator = build_networks(cfg)
    logger.info(
        f"Built {cfg.model_kind} pair: G {generator.num_parameters()} params, "
        f"D {discriminator.num_parameters()} params ({ag.get_default_dtype()})"
    )
    return TrainState(
        config=cfg,
        generator=generator,
        discriminator=discriminator,
        opt_g=_adam(generator, cfg),
        opt_d=_adam(discriminator, cfg),
        rng=np.random.default_rng([cfg.seed, 2]),
    )


__all__ = ["METRIC_COLUMNS", "StepMetrics", "TrainState", "build_networks", "build_state"]
