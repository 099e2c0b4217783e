"""Tests for the DenseNet encoder."""

from __future__ import annotations

import numpy as np
import pytest

from ical.autograd.gradcheck import check_gradients
from ical.autograd.random import SeedTree, derive_rng
from ical.autograd.tensor import Tensor
from ical.errors import ShapeError
from ical.models.cost import encoder_params
from ical.models.encoder import DenseBlock, DenseEncoder, Transition, masked_avg_pool2
from ical.presets import BASE, EncoderConfig


def ink_image(rng, height, width):
    return (rng.random((1, 1, height, width)) > 0.7).astype(np.float64)


def padded(image, height, width):
    out = np.zeros((image.shape[0], 1, height, width))
    out[:, :, : image.shape[2], : image.shape[3]] = image
    mask = np.zeros((image.shape[0], height, width), dtype=bool)
    mask[:, : image.shape[2], : image.shape[3]] = True
    return out, mask


def full_mask(image):
    return np.ones((image.shape[0], *image.shape[2:]), dtype=bool)


@pytest.fixture
def encoder(float64, tiny_config):
    return DenseEncoder(tiny_config.encoder, SeedTree(1, "encoder"))


class TestEncoder:
    def test_output_shape(self, encoder, rng):
        image = ink_image(rng, 40, 64)
        grid = encoder(image, full_mask(image))
        assert grid.features.shape == (1, 16, 5, 8)
        assert grid.shape == (5, 8)
        assert encoder.config.downsample == 8

    def test_flatten(self, encoder, rng):
        image = ink_image(rng, 40, 64)
        memory, mask = encoder(image, full_mask(image)).flatten()
        assert memory.shape == (1, 40, 16)
        assert mask.shape == (1, 40)

    def test_too_small(self, encoder):
        image = np.zeros((1, 1, 15, 64))
        with pytest.raises(ShapeError, match="smaller than 16x16"):
            encoder(image, full_mask(image))

    def test_mask_mismatch(self, encoder):
        image = np.zeros((1, 1, 32, 32))
        with pytest.raises(ShapeError, match="image mask .* does not match"):
            encoder(image, np.ones((1, 32, 31), dtype=bool))

    def test_not_grayscale(self, encoder):
        with pytest.raises(ShapeError, match=r"\(B, 1, H, W\)"):
            encoder(np.zeros((1, 3, 32, 32)), np.ones((1, 32, 32), dtype=bool))

    @pytest.mark.parametrize("training", [False, True])
    def test_padding_invariance(self, encoder, rng, training):
        image = ink_image(rng, 40, 50)
        encoder.train(training)
        alone = encoder(image, full_mask(image))
        big, mask = padded(image, 48, 80)
        grid = encoder(big, mask)
        assert alone.shape == (5, 7)
        assert grid.shape == (6, 10)
        np.testing.assert_array_equal(grid.mask[0, :5, :7], True)
        assert not grid.mask[0, 5:].any() and not grid.mask[0, :, 7:].any()
        np.testing.assert_allclose(grid.features.data[:, :, :5, :7], alone.features.data, atol=1e-10)
        assert np.all(grid.features.data[:, :, 5:] == 0)

    def test_batch_padding_invariance(self, encoder, rng):
        encoder.eval()
        first, second = ink_image(rng, 40, 50), ink_image(rng, 48, 80)
        images = np.concatenate([padded(first, 48, 80)[0], second])
        mask = np.concatenate([padded(first, 48, 80)[1], full_mask(second)])
        grid = encoder(images, mask)
        alone = encoder(first, full_mask(first))
        np.testing.assert_allclose(grid.features.data[:1, :, :5, :7], alone.features.data, atol=1e-10)

    def test_translation_by_downsample_factor(self, encoder, rng):
        encoder.eval()
        image = np.zeros((1, 1, 32, 64))
        image[:, :, 8:24, 16:48] = ink_image(rng, 16, 32)[0, 0]
        shifted = np.concatenate([np.zeros((1, 1, 32, encoder.config.downsample)), image], axis=3)
        base = encoder(image, full_mask(image)).features.data
        moved = encoder(shifted, full_mask(shifted)).features.data
        assert moved.shape[3] == base.shape[3] + 1
        np.testing.assert_allclose(moved[..., 1:], base, atol=1e-10)

    def test_base_parameter_count(self):
        encoder = DenseEncoder(BASE.encoder, SeedTree(0, "encoder"))
        assert encoder.num_parameters() == encoder_params(BASE.encoder)
        assert encoder.feature_channels == 684

    def test_base_square_grid(self):
        encoder = DenseEncoder(BASE.encoder, SeedTree(0, "encoder"))
        image = np.zeros((1, 1, 128, 128), dtype=np.float32)
        image[0, 0, 40:90, 30:100] = 1.0
        grid = encoder(image, full_mask(image))
        assert grid.shape == (8, 8)
        assert grid.features.shape == (1, BASE.encoder.d_model, 8, 8)
        assert grid.mask.all()

    @pytest.mark.slow
    def test_base_wide_grid(self):
        encoder = DenseEncoder(BASE.encoder, SeedTree(0, "encoder"))
        image = np.zeros((1, 1, 120, 800), dtype=np.float32)
        image[0, 0, 30:90, 100:700] = 1.0
        grid = encoder(image, full_mask(image))
        assert grid.shape == (8, 50)
        assert grid.features.shape == (1, BASE.encoder.d_model, 8, 50)

    def test_seeded_init(self, float64, tiny_config):
        a = DenseEncoder(tiny_config.encoder, SeedTree(5, "encoder"))
        b = DenseEncoder(tiny_config.encoder, SeedTree(5, "encoder"))
        for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(p.data, q.data, err_msg=name)


class TestDenseBlock:
    def test_zero_layers_is_identity(self, rng, float64):
        block = DenseBlock(16, 0, 8, 0.0, SeedTree(0, "block"))
        x = Tensor(rng.normal(size=(1, 16, 5, 5)))
        out = block(x, np.ones((1, 5, 5), dtype=bool))
        assert block.out_channels == 16
        np.testing.assert_array_equal(out.data, x.data)

    def test_channel_growth(self, rng, float64):
        block = DenseBlock(16, 4, 8, 0.0, SeedTree(0, "block"))
        x = Tensor(rng.normal(size=(2, 16, 6, 6)))
        out = block(x, np.ones((2, 6, 6), dtype=bool))
        assert out.shape == (2, 48, 6, 6)
        np.testing.assert_array_equal(out.data[:, :16], x.data)

    @pytest.mark.parametrize("seed", range(20))
    def test_gradients(self, seed, float64):
        rng = derive_rng(seed, "dense-block")
        block = DenseBlock(3, 2, 2, 0.0, SeedTree(0, "block"))
        x = Tensor(rng.normal(size=(2, 3, 5, 6)), requires_grad=True)
        mask = np.ones((2, 5, 6), dtype=bool)
        mask[1, :, 4:] = False
        cotangent = rng.normal(size=(2, block.out_channels, 5, 6))

        def loss():
            return (block(x, mask) * Tensor(cotangent)).sum()

        results = check_gradients(loss, {"x": x, **dict(block.named_parameters())})
        assert all(r.passed for r in results), [r for r in results if not r.passed]


class TestTransition:
    def test_halves_channels_and_extent(self, rng, float64):
        transition = Transition(32, SeedTree(0, "transition"))
        out, mask = transition(Tensor(rng.normal(size=(1, 32, 7, 7))), np.ones((1, 7, 7), dtype=bool))
        assert out.shape == (1, 16, 4, 4)
        assert mask.shape == (1, 4, 4) and mask.all()

    def test_average_skips_padding(self, float64):
        x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4))
        mask = np.ones((1, 4, 4), dtype=bool)
        mask[:, :, 3] = False
        out, pooled = masked_avg_pool2(x, mask)
        assert out.data[0, 0, 0, 1] == pytest.approx((2 + 6) / 2)
        assert out.data[0, 0, 0, 0] == pytest.approx((0 + 1 + 4 + 5) / 4)
        assert pooled.all()

    @pytest.mark.parametrize("seed", range(20))
    def test_gradients(self, seed, float64):
        rng = derive_rng(seed, "transition")
        transition = Transition(4, SeedTree(0, "transition"))
        x = Tensor(rng.normal(size=(2, 4, 5, 5)), requires_grad=True)
        mask = np.ones((2, 5, 5), dtype=bool)
        mask[0, 3:] = False
        cotangent = rng.normal(size=(2, 2, 3, 3))

        def loss():
            return (transition(x, mask)[0] * Tensor(cotangent)).sum()

        results = check_gradients(loss, {"x": x, **dict(transition.named_parameters())})
        assert all(r.passed for r in results), [r for r in results if not r.passed]


class TestConfig:
    def test_downsample(self):
        assert BASE.encoder.downsample == 16
        assert EncoderConfig(num_blocks=1).downsample == 4

    def test_rejects_bad_dropout(self):
        with pytest.raises(ValueError, match="dropout"):
            EncoderConfig(dropout=1.0)
