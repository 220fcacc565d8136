import torch
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from common.base.utils import make_generator
from .ops import PerturbConfig
from .ops import apply_perturbation
from .ops import feature_dropout
from .ops import feature_noise
from .ops import spatial_dropout


def ramp_features(side=10, channels=4, dtype=torch.float32):
    """Channel sum at position i (row-major) equals i + 1."""
    index = torch.arange(1, side * side + 1, dtype=dtype).view(1, 1, side, side)
    return (index / channels).expand(1, channels, side, side).clone()


def zeroed_positions(out):
    return (out.abs().sum(dim=1) == 0)


class FeatureNoiseTests(SimpleTestCase):
    def test_zero_interval_is_identity(self):
        f = torch.randn(2, 8, 5, 5)
        self.assertTrue(torch.equal(feature_noise(f, 0.0, 0.0, make_generator(0)), f))

    def test_unit_interval_doubles(self):
        f = torch.randn(2, 8, 5, 5)
        self.assertTrue(torch.equal(feature_noise(f, 1.0, 1.0, make_generator(0)), 2 * f))

    def test_default_bounds(self):
        f = torch.rand(4, 16, 8, 8)
        out = feature_noise(f, -0.3, 0.3, make_generator(1))
        self.assertTrue(bool((out >= 0.7 * f - 1e-6).all()))
        self.assertTrue(bool((out <= 1.3 * f + 1e-6).all()))

    def test_noise_is_redrawn_per_call(self):
        f = torch.rand(1, 4, 6, 6) + 0.1
        generator = make_generator(2)
        self.assertFalse(torch.equal(feature_noise(f, -0.3, 0.3, generator), feature_noise(f, -0.3, 0.3, generator)))

    def test_symmetric_noise_is_unbiased(self):
        f = torch.rand(1, 2, 3, 3, dtype=torch.float64) + 0.5
        draws = feature_noise(f.expand(10000, -1, -1, -1), -0.3, 0.3, make_generator(3))
        sigma = f * (0.6 / 12 ** 0.5) / 100
        self.assertTrue(bool(((draws.mean(dim=0, keepdim=True) - f).abs() <= 4 * sigma).all()))

    def test_gradient(self):
        f = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda x: feature_noise(x, -0.3, 0.3, make_generator(4)), (f,)))


class FeatureDropoutTests(SimpleTestCase):
    def test_fixed_threshold_zeroes_top_quarter(self):
        out = feature_dropout(ramp_features(), 0.75, 0.75, make_generator(0))
        zeroed = zeroed_positions(out)
        self.assertEqual(int(zeroed.sum()), 25)
        self.assertTrue(bool(zeroed.flatten()[75:].all()))

    def test_threshold_near_one_zeroes_only_the_maximum(self):
        out = feature_dropout(ramp_features(), 0.999, 0.999, make_generator(0))
        zeroed = zeroed_positions(out).flatten()
        self.assertEqual(int(zeroed.sum()), 1)
        self.assertTrue(bool(zeroed[-1]))

    def test_whole_columns_are_zeroed_and_kept_features_untouched(self):
        f = torch.rand(2, 6, 9, 9) + 0.01
        out = feature_dropout(f, 0.75, 0.9, make_generator(1))
        kept = ~zeroed_positions(out)
        self.assertTrue(torch.equal(out.permute(0, 2, 3, 1)[kept], f.permute(0, 2, 3, 1)[kept]))
        self.assertTrue(bool((out.permute(0, 2, 3, 1)[~kept] == 0).all()))

    def test_default_range_removes_ten_to_thirty_percent(self):
        generator = make_generator(2)
        fractions = []
        for _draw in range(1000):
            spatial = torch.rand(1, 1, 16, 16, generator=generator)
            channel = torch.rand(1, 8, 1, 1, generator=generator) + 0.1
            out = feature_dropout(spatial * channel, 0.75, 0.9, generator)
            fractions.append(float(zeroed_positions(out).float().mean()))
        mean = sum(fractions) / len(fractions)
        self.assertGreaterEqual(mean, 0.10 - 0.05)
        self.assertLessEqual(mean, 0.30 + 0.05)

    def test_constant_map_is_a_no_op(self):
        f = torch.ones(1, 4, 5, 5)
        self.assertTrue(torch.equal(feature_dropout(f, 0.75, 0.9, make_generator(0)), f))

    def test_drop_low_keeps_high_activations(self):
        out = feature_dropout(ramp_features(), 0.75, 0.75, make_generator(0), drop_low=True)
        zeroed = zeroed_positions(out).flatten()
        self.assertEqual(int(zeroed.sum()), 75)
        self.assertFalse(bool(zeroed[-1]))

    def test_literal_variant_returns_the_masked_normalized_map(self):
        out = feature_dropout(ramp_features(), 0.75, 0.75, make_generator(0), literal=True)
        expected = torch.arange(100, dtype=torch.float32).view(10, 10) / 99
        expected[expected >= 0.75] = 0
        for channel in range(out.shape[1]):
            self.assertTrue(torch.allclose(out[0, channel], expected))

    def test_gradient_is_the_mask(self):
        f = (torch.rand(1, 3, 5, 5, dtype=torch.float64) + 0.1).requires_grad_()
        self.assertTrue(torch.autograd.gradcheck(lambda x: feature_dropout(x, 0.75, 0.9, make_generator(5)), (f,)))


class SpatialDropoutTests(SimpleTestCase):
    def test_keep_rate_at_half(self):
        f = torch.ones(1, 1, 316, 317)
        out = spatial_dropout(f, 0.5, make_generator(0))
        self.assertAlmostEqual(float(out.mean()), 0.5, delta=0.01)

    def test_high_keep_probability_zeroes_almost_nothing(self):
        out = spatial_dropout(torch.ones(1, 1, 100, 100), 0.999, make_generator(1))
        self.assertLess(float((out == 0).float().mean()), 0.01)

    def test_drop_probability_reading(self):
        out = spatial_dropout(torch.ones(1, 1, 100, 100), 0.9, make_generator(1), keep_probability=False)
        self.assertAlmostEqual(float(out.mean()), 0.1, delta=0.02)

    def test_zeroed_position_is_zero_in_every_channel(self):
        f = torch.rand(2, 5, 20, 20) + 0.1
        out = spatial_dropout(f, 0.5, make_generator(2))
        zero_counts = (out == 0).sum(dim=1)
        self.assertTrue(bool(((zero_counts == 0) | (zero_counts == 5)).all()))
        self.assertTrue(bool((zero_counts == 5).any()))

    def test_no_rescaling(self):
        f = torch.rand(1, 3, 10, 10) + 0.1
        out = spatial_dropout(f, 0.5, make_generator(3))
        kept = out != 0
        self.assertTrue(torch.equal(out[kept], f[kept]))

    def test_gradient(self):
        f = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda x: spatial_dropout(x, 0.5, make_generator(6)), (f,)))


class PerturbConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = PerturbConfig()
        self.assertEqual((config.noise_lo, config.noise_hi), (-0.3, 0.3))
        self.assertEqual((config.fdrop_lo, config.fdrop_hi), (0.75, 0.9))
        self.assertEqual((config.dropout_p, config.K), (0.5, 4))

    def test_invalid_values(self):
        for kwargs in [
            {'noise_lo': 0.5, 'noise_hi': 0.1},
            {'fdrop_lo': 0.0},
            {'fdrop_lo': 0.9, 'fdrop_hi': 0.8},
            {'dropout_p': 1.0},
            {'K': 0},
            {'types': ('vat',)},
            {'target': 'input'},
        ]:
            with self.subTest(kwargs=kwargs), self.assertRaises(ValidationError):
                PerturbConfig(**kwargs)

    def test_from_config(self):
        config = PerturbConfig.from_config({
            'noise': [-0.1, 0.2], 'feature_dropout': [0.7, 0.8], 'dropout': 0.4, 'K': 2,
            'dropout_keep': False, 'fdrop_literal': False, 'fdrop_drop_low': True,
            'target': 'encoder', 'types': ['noise'],
        })
        self.assertEqual(config.types, ('noise',))
        self.assertEqual(config.target, 'encoder')
        self.assertTrue(config.fdrop_drop_low)

    def test_dispatch(self):
        f = torch.rand(1, 2, 4, 4)
        config = PerturbConfig(noise_lo=0.0, noise_hi=0.0)
        self.assertTrue(torch.equal(apply_perturbation(f, 'noise', config), f))
        with self.assertRaises(KeyError):
            apply_perturbation(f, 'blur', config)
