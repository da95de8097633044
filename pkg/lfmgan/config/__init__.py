"""
Configuration management for the LFM GAN toolkit.

Configuration files are line-oriented ``section.key = value`` text with
``#`` comments. Every key must exist in the defaults; values are coerced
to the type of their default.
"""

import copy
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..core import ConfigError, DScope, LfmMode, PairVariant
from ..utils import flatten_dict, unflatten_dict

logger = logging.getLogger(__name__)

SEED_ENV = "LFM_SEED"
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}
_NONE = {"", "none", "null"}


class Config:
    """
    Nested run settings addressed by ``section.key`` paths.

    Starts from the built-in defaults, then applies a ``key = value`` file
    when one is given. ``explicit`` remembers which keys were set by a file
    or an override rather than inherited from the defaults.
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        self.config_path = Path(config_path) if config_path else None
        self.config = self._load_default_config()
        self.explicit: set = set()

        if self.config_path:
            self.load_config(self.config_path)

    def _load_default_config(self) -> Dict[str, Any]:
        return {
            "data": {
                "kind": "ring",
                "path": None,
                "image_size": 64,
                "subset_n": 0,
                "ring_modes": 8,
                "ring_radius": 2.0,
                "ring_sigma": 0.05,
                "ring_n": 10000,
                "prefetch": 0,
            },
            "model": {
                "kind": "mlp",
                "z_dim": 100,
                "base_channels": 64,
                "feature_dim": 100,
                "hidden": 128,
            },
            "lfm": {
                "mode": "full",
                "lambda_d": 1.0,
                "lambda_g": 1.0,
                "c_max": 100.0,
                "pair_variant": "abs",
                "pairs_when_off": False,
                "d_scope": "full",
                "saturating": False,
            },
            "optim": {
                "lr": 2e-4,
                "beta1": 0.5,
                "beta2": 0.999,
                "eps": 1e-8,
            },
            "train": {
                "batch_size": 128,
                "iterations": 1000,
                "seed": 0,
                "dtype": "float32",
                "output_dir": "runs/default",
                "checkpoint_every": 0,
                "log_every": 100,
                "record_wall_ms": True,
            },
            "eval": {
                "every": 100,
                "n": 128,
                "extractor": "identity",
                "extractor_seed": 0,
                "extractor_checkpoint": None,
                "ref_stats": None,
                "bn_train_mode": True,
                "coverage_samples": 2500,
                "coverage_threshold": 25,
            },
            "logging": {
                "level": "INFO",
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            },
        }

    def _default_for(self, key: str) -> Any:
        defaults = flatten_dict(self._load_default_config())
        if key not in defaults:
            raise ConfigError(f"Unknown configuration key: {key}")
        return defaults[key]

    def coerce(self, key: str, raw: Any) -> Any:
        """
        Convert a raw value to the type of the key's default.

        Raises:
            ConfigError: If the key is unknown or the value does not parse
        """
        default = self._default_for(key)
        if not isinstance(raw, str):
            if default is not None and raw is not None and not isinstance(raw, type(default)):
                if isinstance(default, float) and isinstance(raw, int) and not isinstance(raw, bool):
                    return float(raw)
                raise ConfigError(f"Bad value for {key}: {raw!r} is not {type(default).__name__}")
            return raw
        text = raw.strip()
        try:
            if isinstance(default, bool):
                lowered = text.lower()
                if lowered in _TRUE:
                    return True
                if lowered in _FALSE:
                    return False
                raise ValueError(text)
            if isinstance(default, int):
                return int(text)
            if isinstance(default, float):
                return float(text)
        except ValueError:
            raise ConfigError(f"Bad value for {key}: {text!r} is not {type(default).__name__}")
        if default is None and text.lower() in _NONE:
            return None
        return text

    def parse_text(self, text: str, source: str = "<string>") -> Dict[str, Any]:
        """
        Parse ``key = value`` lines into flat, coerced values.

        Raises:
            ConfigError: On a malformed line or an unknown key
        """
        values: Dict[str, Any] = {}
        for number, line in enumerate(text.splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{source}:{number}: expected 'key = value', got {line.strip()!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key in values:
                logger.warning(f"{source}:{number}: duplicate config key {key}; last value wins")
            values[key] = self.coerce(key, raw)
        return values

    def load_config(self, config_path: Union[str, Path]) -> None:
        """
        Apply a ``key = value`` file on top of the current values.

        Raises:
            ConfigError: On unknown keys or bad values
            OSError: If the file cannot be read
        """
        config_path = Path(config_path)
        with open(config_path, "r", encoding="utf-8") as f:
            values = self.parse_text(f.read(), str(config_path))
        self.update(values)
        logger.info(f"Loaded configuration from {config_path}")

    def update(self, values: Dict[str, Any]) -> None:
        """Apply flat ``section.key`` overrides, coercing each value."""
        coerced = {key: self.coerce(key, value) for key, value in values.items()}
        self.config = self._merge_configs(self.config, unflatten_dict(coerced))
        self.explicit.update(coerced)

    def to_text(self) -> str:
        lines = []
        for key, value in flatten_dict(self.config).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    def save_config(self, config_path: Optional[Union[str, Path]] = None) -> None:
        """Write every key, defaults included, in the file syntax."""
        save_path = Path(config_path) if config_path else self.config_path
        if not save_path:
            raise ValueError("save_config needs a path when the config was not loaded from one")
        save_path.parent.mkdir(parents=True, exist_ok=True)
        save_path.write_text(self.to_text(), encoding="utf-8")
        logger.info(f"Saved configuration to {save_path}")

    def get(self, key: str, default: Any = None) -> Any:
        """Value at a dot path such as ``lfm.lambda_d``, or ``default``."""
        node: Any = self.config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any) -> None:
        """Coerce and store one value; unknown keys raise ConfigError."""
        self.update({key: value})

    def _merge_configs(self, default: Dict[str, Any], user: Dict[str, Any]) -> Dict[str, Any]:
        merged = copy.deepcopy(default)
        for key, value in user.items():
            if isinstance(merged.get(key), dict) and isinstance(value, dict):
                merged[key] = self._merge_configs(merged[key], value)
            else:
                merged[key] = value
        return merged


def resolve_seed(cli_seed: Optional[int], cfg: Config) -> int:
    """
    Pick the run seed.

    Order: command-line flag, explicitly configured ``train.seed``, the
    LFM_SEED environment variable, then 0.
    """
    if cli_seed is not None:
        return int(cli_seed)
    if "train.seed" in cfg.explicit:
        return int(cfg.get("train.seed"))
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}")
    return 0


# Flat config key -> TrainConfig field.
_FIELD_KEYS: Tuple[Tuple[str, str], ...] = (
    ("data.kind", "data_kind"),
    ("data.path", "data_path"),
    ("data.image_size", "image_size"),
    ("data.subset_n", "subset_n"),
    ("data.ring_modes", "ring_modes"),
    ("data.ring_radius", "ring_radius"),
    ("data.ring_sigma", "ring_sigma"),
    ("data.ring_n", "ring_n"),
    ("data.prefetch", "prefetch"),
    ("model.kind", "model_kind"),
    ("model.z_dim", "z_dim"),
    ("model.base_channels", "base_channels"),
    ("model.feature_dim", "feature_dim"),
    ("model.hidden", "hidden"),
    ("lfm.mode", "lfm_mode"),
    ("lfm.lambda_d", "lambda_d"),
    ("lfm.lambda_g", "lambda_g"),
    ("lfm.c_max", "c_max"),
    ("lfm.pair_variant", "pair_variant"),
    ("lfm.pairs_when_off", "pairs_when_off"),
    ("lfm.d_scope", "d_scope"),
    ("lfm.saturating", "saturating"),
    ("optim.lr", "lr"),
    ("optim.beta1", "beta1"),
    ("optim.beta2", "beta2"),
    ("optim.eps", "eps"),
    ("train.batch_size", "batch_size"),
    ("train.iterations", "iterations"),
    ("train.seed", "seed"),
    ("train.dtype", "dtype"),
    ("train.output_dir", "output_dir"),
    ("train.checkpoint_every", "checkpoint_every"),
    ("train.log_every", "log_every"),
    ("train.record_wall_ms", "record_wall_ms"),
    ("eval.every", "eval_every"),
    ("eval.n", "eval_n"),
    ("eval.extractor", "extractor"),
    ("eval.extractor_seed", "extractor_seed"),
    ("eval.extractor_checkpoint", "extractor_checkpoint"),
    ("eval.ref_stats", "ref_stats"),
    ("eval.bn_train_mode", "bn_train_mode"),
    ("eval.coverage_samples", "coverage_samples"),
    ("eval.coverage_threshold", "coverage_threshold"),
)


@dataclass
class TrainConfig:
    """Every hyperparameter and variant flag of one training run."""
    data_kind: str = "ring"
    data_path: Optional[str] = None
    image_size: int = 64
    subset_n: int = 0
    ring_modes: int = 8
    ring_radius: float = 2.0
    ring_sigma: float = 0.05
    ring_n: int = 10000
    prefetch: int = 0
    model_kind: str = "mlp"
    z_dim: int = 100
    base_channels: int = 64
    feature_dim: int = 100
    hidden: int = 128
    lfm_mode: LfmMode = LfmMode.FULL
    lambda_d: float = 1.0
    lambda_g: float = 1.0
    c_max: float = 100.0
    pair_variant: PairVariant = PairVariant.ABS
    pairs_when_off: bool = False
    d_scope: DScope = DScope.FULL
    saturating: bool = False
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    iterations: int = 1000
    seed: int = 0
    dtype: str = "float32"
    output_dir: str = "runs/default"
    checkpoint_every: int = 0
    log_every: int = 100
    record_wall_ms: bool = True
    eval_every: int = 100
    eval_n: int = 128
    extractor: str = "identity"
    extractor_seed: int = 0
    extractor_checkpoint: Optional[str] = None
    ref_stats: Optional[str] = None
    bn_train_mode: bool = True
    coverage_samples: int = 2500
    coverage_threshold: int = 25

    def __post_init__(self):
        try:
            self.lfm_mode = LfmMode(self.lfm_mode)
            self.pair_variant = PairVariant(self.pair_variant)
            self.d_scope = DScope(self.d_scope)
        except ValueError as e:
            raise ConfigError(str(e))

    @classmethod
    def from_config(cls, cfg: Config, seed: Optional[int] = None) -> "TrainConfig":
        """Build from a Config; ``seed`` overrides the configured one."""
        values = {name: cfg.get(key) for key, name in _FIELD_KEYS}
        if seed is not None:
            values["seed"] = seed
        result = cls(**values)
        result.validate()
        return result

    def to_config(self) -> Config:
        cfg = Config()
        flat = {}
        for key, name in _FIELD_KEYS:
            value = getattr(self, name)
            flat[key] = value.value if hasattr(value, "value") else value
        cfg.update(flat)
        return cfg

    def as_dict(self) -> Dict[str, Any]:
        return {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(self).items()}

    @property
    def uses_pairs(self) -> bool:
        return self.lfm_mode is not LfmMode.OFF or self.pairs_when_off

    @property
    def train_variant(self) -> Optional[PairVariant]:
        """Pair variant of the training noise, None for plain Gaussian noise."""
        if not self.uses_pairs or self.pair_variant is PairVariant.PLAIN_RANDOM:
            return None
        return self.pair_variant

    def validate(self) -> None:
        """
        Check cross-field invariants.

        Raises:
            ConfigError: Naming the offending key
        """
        def fail(key: str, message: str) -> None:
            raise ConfigError(f"{key}: {message}")

        if self.data_kind not in ("ring", "images"):
            fail("data.kind", f"expected ring or images, got {self.data_kind!r}")
        if self.model_kind not in ("mlp", "dcgan"):
            fail("model.kind", f"expected mlp or dcgan, got {self.model_kind!r}")
        if self.data_kind == "images" and self.model_kind != "dcgan":
            fail("model.kind", "image data needs the dcgan model")
        if self.data_kind == "ring" and self.model_kind != "mlp":
            fail("model.kind", "ring data needs the mlp model")
        if self.data_kind == "images" and not self.data_path:
            fail("data.path", "image data needs a path")
        if self.image_size not in (16, 32, 64):
            fail("data.image_size", f"must be 16, 32 or 64, got {self.image_size}")
        if self.dtype not in ("float32", "float64"):
            fail("train.dtype", f"must be float32 or float64, got {self.dtype!r}")
        if self.extractor not in ("identity", "fixed_random_cnn", "trained_df"):
            fail("eval.extractor", f"unknown extractor {self.extractor!r}")
        if self.extractor == "identity" and self.data_kind == "images":
            fail("eval.extractor", "identity features are pixel-wide; use fixed_random_cnn or trained_df for images")
        if self.extractor != "identity" and self.data_kind == "ring":
            fail("eval.extractor", "2-D ring data is evaluated with the identity extractor")
        if self.extractor == "trained_df" and not self.extractor_checkpoint:
            fail("eval.extractor_checkpoint", "trained_df needs a checkpoint")
        for key, name in (("lfm.lambda_d", "lambda_d"), ("lfm.lambda_g", "lambda_g"),
                          ("optim.lr", "lr"), ("optim.eps", "eps")):
            if getattr(self, name) < 0:
                fail(key, f"must be nonnegative, got {getattr(self, name)}")
        for key, name in (("optim.beta1", "beta1"), ("optim.beta2", "beta2")):
            if not 0 <= getattr(self, name) < 1:
                fail(key, f"must lie in [0, 1), got {getattr(self, name)}")
        if self.batch_size < 2:
            fail("train.batch_size", f"must be at least 2, got {self.batch_size}")
        if self.uses_pairs and self.batch_size % 2:
            fail("train.batch_size", f"must be even when latent pairs are used, got {self.batch_size}")
        if self.uses_pairs and self.z_dim < 2:
            fail("model.z_dim", f"must be at least 2 when latent pairs are used, got {self.z_dim}")
        if self.z_dim < 1 or self.feature_dim < 1 or self.hidden < 1:
            fail("model", "dimensions must be positive")
        if self.c_max < self.feature_dim / 2:
            fail("lfm.c_max", f"{self.c_max} is below feature_dim/2 = {self.feature_dim / 2}")
        if self.iterations < 0:
            fail("train.iterations", "must be nonnegative")
        if self.eval_n < 2:
            fail("eval.n", f"must be at least 2, got {self.eval_n}")
        if self.ring_modes < 1:
            fail("data.ring_modes", "must be at least 1")
        if self.ring_sigma <= 0:
            fail("data.ring_sigma", "must be positive")
        for key, name in (("eval.every", "eval_every"), ("train.log_every", "log_every"),
                          ("train.checkpoint_every", "checkpoint_every"),
                          ("data.subset_n", "subset_n"), ("data.prefetch", "prefetch")):
            if getattr(self, name) < 0:
                fail(key, "must be nonnegative")


# Defaults consulted before any file is loaded, e.g. for the log format
config = Config()

__all__ = ["Config", "SEED_ENV", "TrainConfig", "config", "resolve_seed"]
