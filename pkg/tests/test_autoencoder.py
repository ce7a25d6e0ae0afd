"""Tests for the image autoencoder and image helpers."""

import numpy as np
import pytest

from draftrank.autoencoder import (
    AutoencoderConfig, AutoencoderError, encode_image_latent, load_autoencoder,
    load_image, resize_nearest, save_autoencoder, save_image, train_autoencoder,
)


def constant_corpus(n=16, h=24, w=16, seed=0):
    rng = np.random.default_rng(seed)
    colors = rng.random((n, 3, 1, 1)).astype(np.float32)
    return np.broadcast_to(colors, (n, 3, h, w)).copy()


class TestTraining:
    def test_constant_images_learned(self):
        # constant-color images are learnable by bias terms alone
        images = constant_corpus(n=64)
        model, history = train_autoencoder(images, latent_dim=8, epochs=50)
        assert history[-1] < 0.01
        assert history[-1] < history[0]

    def test_both_reference_latents_constructible(self):
        images = constant_corpus(n=4)
        for latent in (32, 1024):
            model, _ = train_autoencoder(images, latent_dim=latent, epochs=1)
            assert model.encode(images).shape == (4, latent)

    def test_empty_corpus_error(self):
        with pytest.raises(AutoencoderError):
            train_autoencoder(np.zeros((0, 3, 24, 16)), latent_dim=8, epochs=1)

    def test_out_of_range_values_error(self):
        bad = np.full((2, 3, 24, 16), 1.5, dtype=np.float32)
        with pytest.raises(AutoencoderError):
            train_autoencoder(bad, latent_dim=8, epochs=1)

    def test_resolution_must_divide_by_8(self):
        with pytest.raises(AutoencoderError):
            AutoencoderConfig(height=30, width=16)


class TestEncode:
    @pytest.fixture(scope="class")
    def model(self):
        model, _ = train_autoencoder(constant_corpus(n=4), latent_dim=8, epochs=2)
        return model

    def test_latent_length(self, model):
        img = constant_corpus(n=1)[0]
        assert encode_image_latent(model, img).shape == (8,)

    def test_deterministic(self, model):
        img = constant_corpus(n=1, seed=3)[0]
        np.testing.assert_array_equal(encode_image_latent(model, img),
                                      encode_image_latent(model, img))

    def test_wrong_resolution_error(self, model):
        with pytest.raises(AutoencoderError):
            model.encode(np.zeros((3, 48, 32), dtype=np.float32))

    def test_decode_shape(self, model):
        z = np.zeros(8, dtype=np.float32)
        assert model.decode(z).shape == (1, 3, 24, 16)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        images = constant_corpus(n=4)
        model, _ = train_autoencoder(images, latent_dim=8, epochs=1)
        path = tmp_path / "ae.bin"
        save_autoencoder(model, path)
        loaded = load_autoencoder(path)
        np.testing.assert_array_equal(loaded.encode(images), model.encode(images))

    def test_corrupt_file(self, tmp_path):
        model, _ = train_autoencoder(constant_corpus(n=2), latent_dim=8, epochs=0)
        path = tmp_path / "ae.bin"
        save_autoencoder(model, path)
        path.write_bytes(path.read_bytes()[:-5])
        from draftrank import nn
        with pytest.raises(nn.BlobFormatError):
            load_autoencoder(path)


class TestImageHelpers:
    def test_resize_nearest_exact_downscale(self):
        img = np.arange(2 * 4 * 4, dtype=np.float32).reshape(2, 4, 4)
        out = resize_nearest(img, 2, 2)
        np.testing.assert_array_equal(out[0], [[0, 2], [8, 10]])

    def test_resize_upscale_repeats(self):
        img = np.array([[[1.0, 2.0]]])
        out = resize_nearest(img, 2, 4)
        np.testing.assert_array_equal(out[0], [[1, 1, 2, 2], [1, 1, 2, 2]])

    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        img = rng.random((3, 8, 6)).astype(np.float32)
        path = tmp_path / "img.png"
        save_image(path, img)
        back = load_image(path)
        assert back.shape == (3, 8, 6)
        assert np.abs(back - img).max() < 1 / 255 + 1e-6

    def test_load_with_resize(self, tmp_path):
        img = np.zeros((3, 8, 6), dtype=np.float32)
        path = tmp_path / "img.png"
        save_image(path, img)
        assert load_image(path, resize_to=(16, 12)).shape == (3, 16, 12)

    def test_ppm_supported(self, tmp_path):
        img = np.full((3, 4, 4), 0.5, dtype=np.float32)
        path = tmp_path / "img.ppm"
        save_image(path, img)
        assert load_image(path).shape == (3, 4, 4)
