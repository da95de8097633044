"""
Tests for Frechet distance, feature extractors and mode coverage.
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy import linalg

from lfmgan.config import TrainConfig
from lfmgan.core import EvaluationError
from lfmgan.eval import (
    Evaluator,
    FixedRandomCNN,
    GaussianStats,
    Identity,
    ModeSpec,
    build_extractor,
    feature_stats,
    frechet_distance,
    load_stats,
    mode_coverage,
    save_stats,
)
from lfmgan.train import build_state, save_checkpoint


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def sqrtm_oracle(a: GaussianStats, b: GaussianStats) -> float:
    root = linalg.sqrtm(a.cov @ b.cov).real
    diff = a.mean - b.mean
    return float(diff @ diff + np.trace(a.cov + b.cov - 2 * root))


class TestFeatureStats:
    """Test cases for GaussianStats and feature_stats."""

    def test_hand_covariance(self):
        stats = feature_stats(np.array([[0.0, 0.0], [2.0, 0.0]]), Identity())
        np.testing.assert_array_equal(stats.mean, [1.0, 0.0])
        np.testing.assert_array_equal(stats.cov, [[2.0, 0.0], [0.0, 0.0]])
        assert stats.n == 2

    def test_duplicated_set(self):
        points = np.random.default_rng(0).standard_normal((20, 3))
        a = feature_stats(points, Identity())
        b = feature_stats(points[::-1].copy(), Identity())
        np.testing.assert_allclose(a.mean, b.mean, atol=1e-15)
        np.testing.assert_allclose(a.cov, b.cov, atol=1e-14)

    def test_too_few_samples(self):
        with pytest.raises(EvaluationError):
            feature_stats(np.zeros((1, 2)), Identity())

    def test_covariance_is_symmetrized(self):
        stats = GaussianStats(np.zeros(2), np.array([[1.0, 0.2], [0.4, 1.0]]), 5)
        np.testing.assert_array_equal(stats.cov, stats.cov.T)


class TestFrechetDistance:
    """Test cases for frechet_distance."""

    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def test_self_distance(self):
        stats = GaussianStats(self.rng.standard_normal(5), random_spd(self.rng, 5), 10)
        assert frechet_distance(stats, stats) <= 1e-8

    def test_one_dimensional_closed_form(self):
        a = GaussianStats(np.array([0.0]), np.array([[1.0]]), 10)
        b = GaussianStats(np.array([1.0]), np.array([[1.0]]), 10)
        assert frechet_distance(a, b) == pytest.approx(1.0, abs=1e-8)

    def test_matches_sqrtm_oracle(self):
        for _ in range(10):
            a = GaussianStats(self.rng.standard_normal(5), random_spd(self.rng, 5), 10)
            b = GaussianStats(self.rng.standard_normal(5), random_spd(self.rng, 5), 10)
            assert frechet_distance(a, b) == pytest.approx(sqrtm_oracle(a, b), abs=1e-6)
            assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-8)

    def test_diagonal_closed_form(self):
        for _ in range(10):
            mu, nu = self.rng.standard_normal(4), self.rng.standard_normal(4)
            s, t = self.rng.uniform(0.1, 2.0, 4), self.rng.uniform(0.1, 2.0, 4)
            a = GaussianStats(mu, np.diag(s ** 2), 10)
            b = GaussianStats(nu, np.diag(t ** 2), 10)
            expected = float(((mu - nu) ** 2).sum() + ((s - t) ** 2).sum())
            assert frechet_distance(a, b) == pytest.approx(expected, abs=1e-8)

    def test_singular_covariances(self):
        a = GaussianStats(np.zeros(3), np.diag([1.0, 0.0, 0.0]), 10)
        b = GaussianStats(np.zeros(3), np.diag([0.0, 1.0, 0.0]), 10)
        assert frechet_distance(a, b) == pytest.approx(2.0, abs=1e-8)

    def test_dimension_mismatch(self):
        a = GaussianStats(np.zeros(2), np.eye(2), 10)
        b = GaussianStats(np.zeros(3), np.eye(3), 10)
        with pytest.raises(EvaluationError):
            frechet_distance(a, b)

    def test_large_negative_eigenvalue(self):
        a = GaussianStats(np.zeros(2), np.diag([1.0, -0.5]), 10)
        b = GaussianStats(np.zeros(2), np.eye(2), 10)
        with pytest.raises(EvaluationError):
            frechet_distance(a, b)

    def test_tiny_negative_eigenvalue_clipped(self):
        a = GaussianStats(np.zeros(2), np.diag([4.0, -5e-11]), 10)
        b = GaussianStats(np.zeros(2), np.eye(2), 10)
        assert frechet_distance(a, b) == pytest.approx(2.0, abs=1e-9)

    def test_clipping_threshold_is_absolute(self):
        a = GaussianStats(np.zeros(2), np.diag([1e6, -2e-10]), 10)
        b = GaussianStats(np.zeros(2), np.eye(2), 10)
        with pytest.raises(EvaluationError):
            frechet_distance(a, b)


class TestModeCoverage:
    """Test cases for mode_coverage."""

    def setup_method(self):
        angles = 2 * np.pi * np.arange(8) / 8
        self.centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def test_samples_at_every_center(self):
        coverage = mode_coverage(self.centers, ModeSpec(self.centers, 0.05, 1))
        assert coverage.modes_covered == 8
        assert coverage.high_quality_fraction == 1.0

    def test_collapsed_samples(self):
        samples = np.repeat(self.centers[:1], 100, axis=0)
        assert mode_coverage(samples, ModeSpec(self.centers, 0.05, 25)).modes_covered == 1

    def test_far_field_samples(self):
        samples = np.array([[10.0, 10.0], [-10.0, 5.0], [0.0, 0.0]])
        coverage = mode_coverage(samples, ModeSpec(self.centers, 0.05, 1))
        assert coverage.modes_covered == 0
        assert coverage.high_quality_fraction == 0.0

    def test_threshold(self):
        samples = np.concatenate([np.repeat(self.centers[:1], 30, axis=0),
                                  np.repeat(self.centers[1:2], 10, axis=0)])
        assert mode_coverage(samples, ModeSpec(self.centers, 0.05, 25)).modes_covered == 1

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        samples = self.centers[rng.integers(0, 8, 500)] + 0.1 * rng.standard_normal((500, 2))
        spec = ModeSpec(self.centers, 0.05, 5)
        shuffled = ModeSpec(self.centers[rng.permutation(8)], 0.05, 5)
        a = mode_coverage(samples, spec)
        b = mode_coverage(samples[rng.permutation(500)], shuffled)
        assert a.modes_covered == b.modes_covered
        assert a.high_quality_fraction == pytest.approx(b.high_quality_fraction)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            ModeSpec(self.centers, 0.0)


class TestExtractors:
    """Test cases for feature extractors and the statistics cache."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir)

    def test_fixed_random_cnn(self):
        images = np.random.default_rng(0).uniform(-1, 1, (3, 3, 16, 16)).astype(np.float32)
        a = FixedRandomCNN(seed=4)(images)
        b = FixedRandomCNN(seed=4)(images)
        c = FixedRandomCNN(seed=5)(images)
        assert a.shape == (3, 64)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert FixedRandomCNN(seed=4).tag == "fixed_random_cnn:4"

    def test_build_extractor(self):
        assert isinstance(build_extractor("identity"), Identity)
        with pytest.raises(ValueError):
            build_extractor("inception")
        with pytest.raises(ValueError):
            build_extractor("trained_df")

    def test_trained_feature_head(self):
        cfg = TrainConfig(
            data_kind="images", model_kind="dcgan", data_path="unused", image_size=16,
            base_channels=4, z_dim=8, feature_dim=8, c_max=8.0, batch_size=4,
            extractor="fixed_random_cnn", output_dir=self.temp_dir,
        )
        path = save_checkpoint(build_state(cfg), Path(self.temp_dir) / "d.lfmt")
        extractor = build_extractor("trained_df", checkpoint=path)
        images = np.random.default_rng(0).uniform(-1, 1, (3, 3, 16, 16)).astype(np.float32)
        features = extractor(images)
        assert features.shape == (3, 8)
        assert np.all(np.abs(features) <= 1.0)
        assert extractor.tag == f"trained_df:{path}"

    def test_stats_cache(self):
        path = Path(self.temp_dir) / "ref.stats"
        stats = feature_stats(np.random.default_rng(1).standard_normal((50, 2)), Identity())
        save_stats(path, stats, "identity")
        loaded, tag = load_stats(path)
        assert tag == "identity"
        assert loaded.n == 50
        np.testing.assert_array_equal(loaded.mean, stats.mean)
        np.testing.assert_array_equal(loaded.cov, stats.cov)

    def test_evaluator(self):
        points = np.random.default_rng(2).standard_normal((200, 2))
        reference = feature_stats(points, Identity())
        evaluator = Evaluator(Identity(), reference, ModeSpec(np.zeros((1, 2)), 1.0, 1))
        assert evaluator.fid(points) == pytest.approx(0.0, abs=1e-10)
        assert evaluator.coverage(points).modes_covered == 1
        assert Evaluator(Identity(), reference).coverage(points) is None
