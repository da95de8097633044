"""
Tests for the training loop, checkpoints and resumption.
"""

import csv
import importlib
import json
import shutil
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from lfmgan import autograd as ag
from lfmgan.autograd import Tensor
from lfmgan.config import TrainConfig
from lfmgan.core import CheckpointError, NumericalError, ShapeError
from lfmgan.formats import encode_ppm
from lfmgan.latent import training_latents
from lfmgan.nets import forward_d, forward_g, frozen, frozen_stats, parameter_fingerprint
from lfmgan.train import (
    METRIC_COLUMNS,
    NAN_DUMP_FILE,
    build_state,
    generate_eval_samples,
    load_checkpoint,
    save_checkpoint,
    train,
    train_step,
)


# lfmgan.train is shadowed by the re-exported train function
train_module = importlib.import_module("lfmgan.train")


def ring_config(output_dir, **overrides) -> TrainConfig:
    values = dict(
        data_kind="ring", model_kind="mlp", z_dim=4, hidden=16, feature_dim=6, c_max=6.0,
        batch_size=16, ring_n=64, iterations=10, dtype="float64", output_dir=str(output_dir),
        eval_every=5, eval_n=32, coverage_samples=200, log_every=0, checkpoint_every=5,
        record_wall_ms=False, seed=3,
    )
    values.update(overrides)
    return TrainConfig(**values)


def plain_gan_step(state, real_batch) -> None:
    """Reference update: BCE only, written out by hand."""
    cfg = state.config
    G, D = state.generator, state.discriminator
    z = training_latents(cfg.batch_size, cfg.z_dim, cfg.train_variant, state.rng)
    with ag.no_grad():
        fake = forward_g(G, z)
    score_real, _, _ = forward_d(D, Tensor(real_batch))
    score_fake, _, _ = forward_d(D, fake)
    loss_d = ag.bce(score_real, 1.0) + ag.bce(score_fake, 0.0)
    state.opt_d.zero_grad()
    ag.backward(loss_d)
    state.opt_d.step()

    z = training_latents(cfg.batch_size, cfg.z_dim, cfg.train_variant, state.rng)
    with frozen(D), frozen_stats(D):
        score, _, _ = forward_d(D, forward_g(G, z))
        loss_g = ag.bce(score, 1.0)
        state.opt_g.zero_grad()
        ag.backward(loss_g)
    state.opt_g.step()
    state.iteration += 1


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


class TestTrainStep:
    """Test cases for single training iterations."""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.batches = np.random.default_rng(0).standard_normal((10, 16, 2))

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def _twin_states(self, cfg):
        with ag.default_dtype(cfg.dtype):
            state = build_state(cfg)
        path = save_checkpoint(state, self.temp_dir / "twin.lfmt")
        return state, load_checkpoint(path)

    @pytest.mark.parametrize("overrides", [
        {"lambda_d": 0.0, "lambda_g": 0.0},
        {"lfm_mode": "off"},
        {"lfm_mode": "off", "pairs_when_off": True},
    ])
    def test_without_regularizer_matches_plain_gan(self, overrides):
        cfg = ring_config(self.temp_dir, **overrides)
        state, reference = self._twin_states(cfg)
        with ag.default_dtype("float64"):
            for batch in self.batches:
                train_step(state, batch)
                plain_gan_step(reference, batch)
        for net, ref in ((state.generator, reference.generator),
                         (state.discriminator, reference.discriminator)):
            params, ref_params = net.named_parameters(), ref.named_parameters()
            for name, p in params.items():
                np.testing.assert_allclose(p.data, ref_params[name].data, rtol=0, atol=1e-12)

    def test_metrics(self):
        cfg = ring_config(self.temp_dir)
        with ag.default_dtype("float64"):
            state = build_state(cfg)
            metrics = train_step(state, self.batches[0])
        assert metrics.iteration == 1 == state.iteration
        assert metrics.fid is None
        assert 0.0 <= metrics.lfm_value <= cfg.feature_dim / 2
        assert 0.0 < metrics.d_real_mean < 1.0
        assert np.isfinite(metrics.loss_d) and np.isfinite(metrics.loss_g)

    def test_lfm_value_absent_when_off(self):
        cfg = ring_config(self.temp_dir, lfm_mode="off")
        with ag.default_dtype("float64"):
            metrics = train_step(build_state(cfg), self.batches[0])
        assert metrics.lfm_value is None

    def test_wrong_batch_size(self):
        cfg = ring_config(self.temp_dir)
        with ag.default_dtype("float64"):
            state = build_state(cfg)
            with pytest.raises(ShapeError):
                train_step(state, self.batches[0][:8])

    def test_non_finite_parameters(self):
        cfg = ring_config(self.temp_dir)
        with ag.default_dtype("float64"):
            state = build_state(cfg)
            next(iter(state.generator.named_parameters().values())).data[...] = np.nan
            with pytest.raises(NumericalError):
                train_step(state, self.batches[0])

    def test_updates_alternate(self):
        cfg = ring_config(self.temp_dir)
        with ag.default_dtype("float64"):
            state = build_state(cfg)
            g_before = parameter_fingerprint(state.generator)
            d_before = parameter_fingerprint(state.discriminator)
            after_d_step = {}
            d_step = state.opt_d.step

            def step_and_record():
                d_step()
                after_d_step["g"] = parameter_fingerprint(state.generator)
                after_d_step["d"] = parameter_fingerprint(state.discriminator)

            state.opt_d.step = step_and_record
            train_step(state, self.batches[0])
        # the D step leaves G alone and the G step leaves D alone
        assert after_d_step["g"] == g_before
        assert after_d_step["d"] != d_before
        assert parameter_fingerprint(state.discriminator) == after_d_step["d"]
        assert parameter_fingerprint(state.generator) != g_before

    def test_g_only_discriminator_sees_bce_only(self):
        g_only = ring_config(self.temp_dir, lfm_mode="g_only", lambda_d=5.0, lambda_g=2.0)
        bce_only = ring_config(self.temp_dir, lfm_mode="off", pairs_when_off=True)
        a, _ = self._twin_states(g_only)
        b, _ = self._twin_states(bce_only)
        assert parameter_fingerprint(a.discriminator) == parameter_fingerprint(b.discriminator)
        with ag.default_dtype("float64"):
            metrics = train_step(a, self.batches[0])
            train_step(b, self.batches[0])
        assert metrics.lfm_value is not None
        assert parameter_fingerprint(a.discriminator) == parameter_fingerprint(b.discriminator)
        assert parameter_fingerprint(a.generator) != parameter_fingerprint(b.generator)

    def test_repeated_runs_agree(self):
        cfg = ring_config(self.temp_dir)
        runs = []
        for _ in range(2):
            with ag.default_dtype("float64"):
                state = build_state(cfg)
                metrics = [train_step(state, batch) for batch in self.batches[:3]]
            runs.append((metrics, parameter_fingerprint(state.generator),
                         parameter_fingerprint(state.discriminator)))
        assert runs[0] == runs[1]

    def test_f_only_scope_leaves_backbone_to_bce(self):
        scoped = ring_config(self.temp_dir, d_scope="f_only")
        unregularized = ring_config(self.temp_dir, lambda_d=0.0)
        a, _ = self._twin_states(scoped)
        b, _ = self._twin_states(unregularized)
        with ag.default_dtype("float64"):
            train_step(a, self.batches[0])
            train_step(b, self.batches[0])
        pa, pb = a.discriminator.named_parameters(), b.discriminator.named_parameters()
        for name in pa:
            if name.startswith("lfm_f"):
                continue
            np.testing.assert_array_equal(pa[name].data, pb[name].data)
        assert any(not np.array_equal(pa[n].data, pb[n].data) for n in pa if n.startswith("lfm_f"))

    def test_convolutional_step(self):
        cfg = TrainConfig(
            data_kind="images", model_kind="dcgan", data_path="unused", image_size=16,
            base_channels=4, z_dim=8, feature_dim=8, c_max=8.0, batch_size=4,
            extractor="fixed_random_cnn", output_dir=str(self.temp_dir),
        )
        with ag.default_dtype("float32"):
            state = build_state(cfg)
            real = np.random.default_rng(1).uniform(-1, 1, (4, 3, 16, 16)).astype(np.float32)
            metrics = train_step(state, real)
            samples = generate_eval_samples(state, 6)
        assert np.isfinite(metrics.loss_d) and np.isfinite(metrics.loss_g)
        assert samples.shape == (6, 3, 16, 16)
        assert np.all(np.abs(samples) <= 1.0)


class TestTrainLoop:
    """Test cases for train(), checkpoints and resume."""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_outputs(self):
        run = train(ring_config(self.temp_dir / "a"))
        rows = read_rows(run.metrics_path)
        assert tuple(rows[0]) == METRIC_COLUMNS
        assert len(rows) == 11
        fid_col = METRIC_COLUMNS.index("fid")
        assert [r[0] for r in rows[1:] if r[fid_col]] == ["5", "10"]
        assert all(float(r[fid_col]) >= 0 for r in rows[1:] if r[fid_col])
        names = sorted(p.name for p in run.checkpoints)
        assert names == ["final.lfmt", "iter_0000005.lfmt", "iter_0000010.lfmt"]
        assert run.coverage is not None
        assert 0 <= run.coverage.modes_covered <= 8
        assert len(run.fids) == 2

    def test_same_seed_same_metrics(self):
        a = train(ring_config(self.temp_dir / "a"))
        b = train(ring_config(self.temp_dir / "b"))
        assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()
        c = train(ring_config(self.temp_dir / "c", seed=4))
        assert a.metrics_path.read_bytes() != c.metrics_path.read_bytes()

    def test_lfm_column_empty_when_off(self):
        run = train(ring_config(self.temp_dir / "off", lfm_mode="off"))
        col = METRIC_COLUMNS.index("lfm_value")
        assert all(r[col] == "" for r in read_rows(run.metrics_path)[1:])

    def test_checkpoint_reencodes_identically(self):
        run = train(ring_config(self.temp_dir / "a", iterations=5, eval_every=0))
        first = run.checkpoints[-1]
        again = save_checkpoint(load_checkpoint(first), self.temp_dir / "again.lfmt")
        assert first.read_bytes() == again.read_bytes()

    def test_resume_matches_straight_run(self):
        straight = train(ring_config(self.temp_dir / "straight"))
        middle = self.temp_dir / "straight" / "checkpoints" / "iter_0000005.lfmt"
        resumed = train(ring_config(self.temp_dir / "resumed"), resume=middle)
        assert resumed.state.iteration == 10
        assert len(resumed.state.history) == 10
        for a, b in zip(straight.state.history, resumed.state.history):
            assert a.iteration == b.iteration
            assert a.loss_d == pytest.approx(b.loss_d, abs=1e-12)
            assert a.loss_g == pytest.approx(b.loss_g, abs=1e-12)
        for name, p in straight.state.generator.named_parameters().items():
            np.testing.assert_allclose(p.data, resumed.state.generator.named_parameters()[name].data,
                                       rtol=0, atol=1e-12)
        rows = read_rows(resumed.metrics_path)
        assert [r[0] for r in rows[1:]] == [str(i) for i in range(6, 11)]

    def test_resume_truncates_rows_in_place(self):
        cfg = ring_config(self.temp_dir / "a")
        train(cfg)
        middle = self.temp_dir / "a" / "checkpoints" / "iter_0000005.lfmt"
        run = train(replace(cfg, iterations=7), resume=middle)
        assert [r[0] for r in read_rows(run.metrics_path)[1:]] == [str(i) for i in range(1, 8)]

    def test_corrupt_checkpoint(self):
        path = self.temp_dir / "bad.lfmt"
        path.write_bytes(b"LFMG" + bytes(40))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_nan_dump(self, monkeypatch):
        original = train_module.train_step

        def poisoned(state, batch):
            if state.iteration == 6:
                next(iter(state.generator.named_parameters().values())).data[...] = np.nan
            return original(state, batch)

        monkeypatch.setattr(train_module, "train_step", poisoned)
        out = self.temp_dir / "nan"
        with pytest.raises(NumericalError):
            train(ring_config(out))
        dump = json.loads((out / "checkpoints" / NAN_DUMP_FILE).read_text())
        assert dump["iteration"] == 7
        assert dump["last_metrics"]["iteration"] == "6"
        assert not all(dump["parameters_finite"].values())
        assert (out / "checkpoints" / "iter_0000005.lfmt").exists()

    def test_image_run(self):
        folder = self.temp_dir / "faces"
        folder.mkdir()
        rng = np.random.default_rng(0)
        for i in range(8):
            pixels = rng.integers(0, 256, (20, 24, 3), dtype=np.uint8)
            (folder / f"{i:03d}.ppm").write_bytes(encode_ppm(pixels))
        cfg = TrainConfig(
            data_kind="images", model_kind="dcgan", data_path=str(folder), image_size=16,
            base_channels=4, z_dim=8, feature_dim=8, c_max=8.0, batch_size=4, iterations=2,
            extractor="fixed_random_cnn", eval_every=2, eval_n=8, log_every=1,
            output_dir=str(self.temp_dir / "run"),
        )
        run = train(cfg)
        assert run.coverage is None
        assert len(run.fids) == 1 and run.fids[0] >= 0
