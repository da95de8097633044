"""
Tests for configuration parsing, seeds and TrainConfig validation.
"""

import logging
import shutil
import tempfile
from pathlib import Path

import pytest

from lfmgan.config import SEED_ENV, Config, TrainConfig, resolve_seed
from lfmgan.core import ConfigError, DScope, LfmMode, PairVariant


class TestConfig:
    """Test cases for Config."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_defaults(self):
        cfg = Config()
        assert cfg.get("lfm.lambda_d") == 1.0
        assert cfg.get("optim.lr") == 2e-4
        assert cfg.get("optim.beta1") == 0.5
        assert cfg.get("train.batch_size") == 128
        assert cfg.get("model.z_dim") == 100
        assert cfg.get("missing.key", "fallback") == "fallback"

    def test_parse_text(self):
        cfg = Config()
        values = cfg.parse_text(
            "# a comment\n"
            "lfm.lambda_d = 0.5   # trailing\n"
            "\n"
            "train.batch_size = 64\n"
            "eval.bn_train_mode = no\n"
            "data.path = none\n"
        )
        assert values == {
            "lfm.lambda_d": 0.5,
            "train.batch_size": 64,
            "eval.bn_train_mode": False,
            "data.path": None,
        }

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="lfm.lambda_x"):
            Config().parse_text("lfm.lambda_x = 1")

    def test_bad_values(self):
        cfg = Config()
        with pytest.raises(ConfigError):
            cfg.parse_text("train.batch_size = many")
        with pytest.raises(ConfigError):
            cfg.parse_text("eval.bn_train_mode = maybe")
        with pytest.raises(ConfigError):
            cfg.parse_text("no equals sign here")
        with pytest.raises(ConfigError):
            cfg.set("train.iterations", "ten")

    def test_duplicate_key_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            values = Config().parse_text("train.seed = 1\ntrain.seed = 2\n")
        assert values["train.seed"] == 2
        assert "duplicate" in caplog.text

    def test_int_promoted_to_float(self):
        cfg = Config()
        cfg.set("lfm.lambda_g", 2)
        assert cfg.get("lfm.lambda_g") == 2.0
        assert isinstance(cfg.get("lfm.lambda_g"), float)

    def test_save_load(self):
        path = Path(self.temp_dir) / "run.conf"
        cfg = Config()
        cfg.update({"lfm.mode": "g_only", "train.iterations": 7, "data.path": "faces"})
        cfg.save_config(path)
        loaded = Config(path)
        assert loaded.config == cfg.config
        assert "train.iterations" in loaded.explicit

    def test_save_without_path(self):
        with pytest.raises(ValueError):
            Config().save_config()


class TestResolveSeed:
    """Test cases for the seed resolution order."""

    def test_order(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "11")
        cfg = Config()
        assert resolve_seed(None, cfg) == 11
        cfg.set("train.seed", 5)
        assert resolve_seed(None, cfg) == 5
        assert resolve_seed(3, cfg) == 3

    def test_default(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        assert resolve_seed(None, Config()) == 0

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        with pytest.raises(ConfigError):
            resolve_seed(None, Config())


class TestTrainConfig:
    """Test cases for TrainConfig."""

    def test_from_config(self):
        cfg = Config()
        cfg.update({"lfm.mode": "off", "lfm.pair_variant": "no_abs", "lfm.d_scope": "f_only"})
        train_cfg = TrainConfig.from_config(cfg, seed=9)
        assert train_cfg.lfm_mode is LfmMode.OFF
        assert train_cfg.pair_variant is PairVariant.NO_ABS
        assert train_cfg.d_scope is DScope.F_ONLY
        assert train_cfg.seed == 9

    def test_dict_and_config_round_trip(self):
        train_cfg = TrainConfig(lfm_mode="g_only", iterations=12, batch_size=16)
        assert train_cfg.as_dict()["lfm_mode"] == "g_only"
        again = TrainConfig.from_config(train_cfg.to_config())
        assert again == train_cfg

    def test_unknown_enum(self):
        with pytest.raises(ConfigError):
            TrainConfig(lfm_mode="sometimes")

    def test_training_noise_variant(self):
        assert TrainConfig().train_variant is PairVariant.ABS
        assert TrainConfig(lfm_mode="off").train_variant is None
        assert TrainConfig(lfm_mode="off", pairs_when_off=True).train_variant is PairVariant.ABS
        assert TrainConfig(pair_variant="plain_random").train_variant is None

    @pytest.mark.parametrize("overrides,key", [
        ({"batch_size": 7}, "train.batch_size"),
        ({"lambda_d": -1.0}, "lfm.lambda_d"),
        ({"beta1": 1.0}, "optim.beta1"),
        ({"c_max": 10.0}, "lfm.c_max"),
        ({"dtype": "float16"}, "train.dtype"),
        ({"data_kind": "images", "model_kind": "dcgan", "data_path": "x"}, "eval.extractor"),
        ({"data_kind": "images", "model_kind": "mlp", "data_path": "x"}, "model.kind"),
        ({"data_kind": "images", "model_kind": "dcgan", "extractor": "fixed_random_cnn"}, "data.path"),
        ({"extractor": "trained_df"}, "eval.extractor"),
        ({"image_size": 48}, "data.image_size"),
        ({"eval_n": 1}, "eval.n"),
    ])
    def test_validation_names_the_key(self, overrides, key):
        with pytest.raises(ConfigError, match=key):
            TrainConfig(**overrides).validate()

    def test_odd_batch_allowed_without_pairs(self):
        TrainConfig(lfm_mode="off", batch_size=7).validate()
