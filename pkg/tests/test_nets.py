"""
Tests for network construction, initialization and forward passes.
"""

import numpy as np
import pytest

from lfmgan import autograd as ag
from lfmgan.autograd import Tensor
from lfmgan.core import LfmMode, ShapeError
from lfmgan.latent import sample_gaussian
from lfmgan.nets import (
    build_discriminator,
    build_generator,
    build_mlp_gan,
    forward_d,
    forward_g,
    frozen,
    frozen_stats,
    init_weights,
    parameter_fingerprint,
)

GENERATOR_PARAMS = (
    100 * 512 * 16 + 2 * 512
    + 512 * 256 * 16 + 2 * 256
    + 256 * 128 * 16 + 2 * 128
    + 128 * 64 * 16 + 2 * 64
    + 64 * 3 * 16 + 3
)
BACKBONE_PARAMS = 3 * 64 * 16 + 64 * 128 * 16 + 2 * 128 + 128 * 256 * 16 + 2 * 256 + 256 * 512 * 16 + 2 * 512
HEAD_C_PARAMS = 512 * 16 + 1
HEAD_F_PARAMS = 512 * 100 * 16 + 100
F_LAYER_PARAMS = 100 * 100 + 100


class TestGenerator:
    """Test cases for the convolutional generator."""

    def setup_method(self):
        self.net = build_generator(seed=0)

    def test_parameter_count(self):
        assert GENERATOR_PARAMS == 3_576_707
        assert self.net.num_parameters() == GENERATOR_PARAMS

    def test_shape_chain_and_range(self):
        z = sample_gaussian(2, 100, np.random.default_rng(0))
        with ag.no_grad():
            out = forward_g(self.net, z)
        assert out.shape == (2, 3, 64, 64)
        assert np.all(np.abs(out.data) <= 1.0)

    def test_accepts_four_dimensional_latents(self):
        z = np.zeros((2, 100, 1, 1), dtype=np.float32)
        with ag.no_grad():
            a = forward_g(self.net, z).data
            b = forward_g(self.net, z).data
        np.testing.assert_array_equal(a, b)

    def test_wrong_latent_width(self):
        with pytest.raises(ShapeError):
            forward_g(self.net, np.zeros((2, 50), dtype=np.float32))

    def test_unsupported_size(self):
        with pytest.raises(ValueError):
            build_generator(image_size=48)

    def test_initialization_statistics(self):
        weight = self.net.named_parameters()["main.0.weight"].data
        assert weight.shape == (100, 512, 4, 4)
        n = weight.size
        assert abs(weight.mean()) <= 3 * 0.02 / np.sqrt(n)
        assert abs(weight.std() - 0.02) <= 0.05 * 0.02
        gammas = np.concatenate([p.data for name, p in self.net.named_parameters().items()
                                 if name.endswith("gamma")])
        assert abs(gammas.mean() - 1.0) < 0.01

    def test_same_seed_same_weights(self):
        assert parameter_fingerprint(self.net) == parameter_fingerprint(build_generator(seed=0))
        assert parameter_fingerprint(self.net) != parameter_fingerprint(build_generator(seed=1))

    def test_gradient_reaches_latents(self):
        with ag.default_dtype(np.float64):
            net = build_generator(z_dim=8, image_size=16, base_channels=4, seed=3)
            z = Tensor(np.random.default_rng(0).standard_normal((2, 8)), requires_grad=True)
            ag.mean(forward_g(net, z)).backward()
        assert np.all(np.isfinite(z.grad))
        assert np.any(z.grad != 0)


class TestDiscriminator:
    """Test cases for the split discriminator."""

    def setup_method(self):
        self.x = Tensor(np.random.default_rng(1).uniform(-1, 1, (2, 3, 64, 64)).astype(np.float32))

    def test_parameter_counts(self):
        full = build_discriminator(mode=LfmMode.FULL, seed=0)
        g_only = build_discriminator(mode=LfmMode.G_ONLY, seed=0)
        off = build_discriminator(mode=LfmMode.OFF, seed=0)
        base = BACKBONE_PARAMS + HEAD_C_PARAMS + HEAD_F_PARAMS
        assert full.num_parameters() == base + F_LAYER_PARAMS
        assert g_only.num_parameters() == base
        assert off.num_parameters() == base
        assert not any(name.startswith("lfm_f") for name in g_only.named_parameters())

    def test_outputs(self):
        net = build_discriminator(seed=0)
        with ag.no_grad():
            score, raw, feature = forward_d(net, self.x)
        assert score.shape == (2, 1, 1, 1)
        assert raw.shape == (2, 100, 1, 1)
        assert feature.shape == (2, 100, 1, 1)
        assert np.all((score.data > 0) & (score.data < 1))
        assert np.all(np.abs(feature.data) <= 1.0)

    def test_no_f_layer_passes_features_through(self):
        net = build_discriminator(mode="g_only", seed=0)
        with ag.no_grad():
            _, raw, feature = forward_d(net, self.x)
        assert feature is raw

    def test_shared_backbone(self):
        net = build_discriminator(seed=0)
        with ag.no_grad(), frozen_stats(net):
            shared = net.features(self.x).data
            again = net.features(self.x).data
            _, raw, _ = forward_d(net, self.x)
            direct = net.head_f(Tensor(shared)).data
        np.testing.assert_array_equal(shared, again)
        np.testing.assert_array_equal(raw.data, direct)

    def test_wrong_input_size(self):
        net = build_discriminator(image_size=32, seed=0)
        with pytest.raises(ShapeError):
            forward_d(net, self.x)

    def test_smaller_sizes(self):
        for size in (16, 32):
            net = build_discriminator(image_size=size, feature_dim=10, base_channels=8, seed=0)
            x = Tensor(np.zeros((2, 3, size, size), dtype=np.float32))
            with ag.no_grad():
                score, raw, _ = forward_d(net, x)
            assert score.shape == (2, 1, 1, 1)
            assert raw.shape == (2, 10, 1, 1)


class TestModuleState:
    """Test cases for module-level helpers."""

    def setup_method(self):
        self.pair = build_mlp_gan(4, 16, 6, LfmMode.FULL, seed=0)

    def test_mlp_shapes(self):
        z = sample_gaussian(8, 4, np.random.default_rng(0))
        with ag.no_grad():
            points = forward_g(self.pair.generator, z)
            score, raw, feature = forward_d(self.pair.discriminator, points)
        assert points.shape == (8, 2)
        assert score.shape == (8, 1)
        assert feature.shape == (8, 6)
        assert np.all(np.abs(raw.data) <= 1.0)

    def test_frozen_blocks_gradients(self):
        d = self.pair.discriminator
        x = Tensor(np.ones((4, 2), dtype=np.float32), requires_grad=True)
        with frozen(d):
            score, _, _ = forward_d(d, x)
            ag.mean(score).backward()
        assert all(not np.any(p.grad) for p in d.named_parameters().values())
        assert np.any(x.grad)
        assert all(p.requires_grad for p in d.named_parameters().values())

    def test_frozen_stats_keeps_running_statistics(self):
        net = build_generator(z_dim=4, image_size=16, base_channels=4, seed=0)
        before = {k: v.copy() for k, v in net.named_buffers().items()}
        with ag.no_grad(), frozen_stats(net):
            forward_g(net, np.ones((2, 4), dtype=np.float32))
        for name, value in net.named_buffers().items():
            np.testing.assert_array_equal(value, before[name])
        with ag.no_grad():
            forward_g(net, np.ones((2, 4), dtype=np.float32))
        assert any(np.any(v != before[k]) for k, v in net.named_buffers().items())

    def test_load_arrays_round_trip_and_errors(self):
        other = build_mlp_gan(4, 16, 6, LfmMode.FULL, seed=1)
        other.generator.load_arrays(self.pair.generator.state_arrays())
        assert parameter_fingerprint(other.generator) == parameter_fingerprint(self.pair.generator)
        arrays = self.pair.generator.state_arrays()
        with pytest.raises(KeyError):
            other.generator.load_arrays({k: v for k, v in list(arrays.items())[1:]})
        bad = dict(arrays)
        first = next(iter(bad))
        bad[first] = np.zeros((1, 1))
        with pytest.raises(ValueError):
            other.generator.load_arrays(bad)

    def test_init_weights_deterministic(self):
        a = init_weights(build_mlp_gan(4, 16, 6, "off", seed=0).generator, np.random.default_rng(5))
        b = init_weights(build_mlp_gan(4, 16, 6, "off", seed=9).generator, np.random.default_rng(5))
        assert parameter_fingerprint(a) == parameter_fingerprint(b)
