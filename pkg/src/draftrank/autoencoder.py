"""Convolutional autoencoder for card images.

Compresses (3, H, W) images into a fixed-width latent vector that can feed
the card representation as the image channel. The default working
resolution is 3x96x64 (the full card aspect scaled to desk size); any
resolution divisible by 8 works. Latent widths of 32 and 1024 are the two
reference bottlenecks; wider keeps visibly more of the art.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import nn

DEFAULT_HEIGHT = 96
DEFAULT_WIDTH = 64


class AutoencoderError(ValueError):
    pass


@dataclass(frozen=True)
class AutoencoderConfig:
    height: int = DEFAULT_HEIGHT
    width: int = DEFAULT_WIDTH
    channels: int = 3
    latent_dim: int = 32
    seed: int = 0
    learning_rate: float = 3e-3
    batch_size: int = 16

    def __post_init__(self):
        if self.height % 8 or self.width % 8:
            raise AutoencoderError("height and width must be divisible by 8")
        if self.latent_dim < 1:
            raise AutoencoderError("latent_dim must be >= 1")


class AutoencoderModel:
    def __init__(self, config: AutoencoderConfig):
        self.config = config
        streams = nn.seed_streams(config.seed, ["enc_init", "dec_init", "shuffle"])
        self.shuffle_rng = streams["shuffle"]
        c, h, w = config.channels, config.height, config.width
        hb, wb = h // 8, w // 8
        self._bottleneck = (16, hb, wb)
        flat = 16 * hb * wb
        enc_rng, dec_rng = streams["enc_init"], streams["dec_init"]
        self.encoder = nn.Sequential([
            nn.Conv2d(c, 8, 3, enc_rng), nn.Elu(), nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, enc_rng), nn.Elu(), nn.MaxPool2d(2),
            nn.Conv2d(16, 16, 3, enc_rng), nn.Elu(), nn.MaxPool2d(2),
            nn.Flatten(), nn.Dense(flat, config.latent_dim, enc_rng),
        ])
        self.decoder = nn.Sequential([
            nn.Dense(config.latent_dim, flat, dec_rng), nn.Elu(),
            nn.Reshape(self._bottleneck), nn.Upsample2d(2),
            nn.Conv2d(16, 16, 3, dec_rng), nn.Elu(), nn.Upsample2d(2),
            nn.Conv2d(16, 8, 3, dec_rng), nn.Elu(), nn.Upsample2d(2),
            nn.Conv2d(8, c, 3, dec_rng),
        ])

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def _check_images(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        expect = (self.config.channels, self.config.height, self.config.width)
        if images.ndim == 3:
            images = images[None]
        if images.ndim != 4 or images.shape[1:] != expect:
            raise AutoencoderError(f"expected images of shape {expect}, "
                                   f"got {tuple(images.shape[1:])}")
        return images

    def encode(self, images: np.ndarray) -> np.ndarray:
        return self.encoder.forward(self._check_images(images), train=False)

    def decode(self, latents: np.ndarray) -> np.ndarray:
        latents = np.asarray(latents, dtype=np.float32)
        if latents.ndim == 1:
            latents = latents[None]
        return self.decoder.forward(latents, train=False)

    def reconstruction_mse(self, images: np.ndarray) -> float:
        images = self._check_images(images)
        out = self.decode(self.encoder.forward(images, train=False))
        return float(((out - images) ** 2).mean())

    def named_params(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.named_params("enc."))
        out.update(self.decoder.named_params("dec."))
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = dict(self.encoder.named_grads("enc."))
        out.update(self.decoder.named_grads("dec."))
        return out


def encode_image_latent(model: AutoencoderModel, image: np.ndarray) -> np.ndarray:
    """Latent vector for one image at the configured resolution."""
    return model.encode(image)[0]


def train_autoencoder(images, latent_dim: int, epochs: int,
                      config: AutoencoderConfig | None = None,
                      ) -> tuple[AutoencoderModel, list[float]]:
    """Train on a stack of (3,H,W) images in [0,1].

    Returns (model, mse history). history[0] is the untrained model's
    reconstruction error, so history[-1] < history[0] is the basic sanity
    condition on any learnable corpus.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[0] == 0:
        raise AutoencoderError("need a nonempty stack of (3,H,W) images")
    if images.min() < 0.0 or images.max() > 1.0:
        raise AutoencoderError("image values must lie in [0,1]")
    c, h, w = images.shape[1:]
    if config is None:
        config = AutoencoderConfig(height=h, width=w, channels=c, latent_dim=latent_dim)
    else:
        config = AutoencoderConfig(**{**asdict(config), "latent_dim": latent_dim,
                                      "height": h, "width": w, "channels": c})
    model = AutoencoderModel(config)
    opt = nn.Adam(lr=config.learning_rate)
    n = images.shape[0]
    with nn.single_threaded_blas():
        history = [model.reconstruction_mse(images)]
        for _ in range(epochs):
            order = model.shuffle_rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch = images[order[start:start + config.batch_size]]
                z = model.encoder.forward(batch, train=True)
                out = model.decoder.forward(z, train=True)
                diff = out - batch
                dout = (2.0 / diff.size) * diff
                dz = model.decoder.backward(dout)
                model.encoder.backward(dz)
                opt.step(model.named_params(), model.named_grads())
            history.append(model.reconstruction_mse(images))
    return model, history


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

AE_FORMAT_VERSION = 1


def save_autoencoder(model: AutoencoderModel, path) -> str:
    digest = nn.save_params(path, model.named_params())
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump({"format_version": AE_FORMAT_VERSION,
                   "params_digest": digest,
                   "config": asdict(model.config),
                   "saved_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
                  fh, indent=1, sort_keys=True)
    return digest


def load_autoencoder(path) -> AutoencoderModel:
    try:
        with open(f"{path}.json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise AutoencoderError(f"cannot read autoencoder sidecar: {exc}") from exc
    if sidecar.get("format_version") != AE_FORMAT_VERSION:
        raise AutoencoderError("unsupported autoencoder format version")
    config = AutoencoderConfig(**sidecar["config"])
    model = AutoencoderModel(config)
    params = nn.load_params(path)
    model.encoder.load_named_params(params, "enc.")
    model.decoder.load_named_params(params, "dec.")
    return model


# ---------------------------------------------------------------------------
# Image helpers
# ---------------------------------------------------------------------------

def resize_nearest(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a (C,H,W) image."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise AutoencoderError(f"expected (C,H,W) image, got shape {image.shape}")
    _, h, w = image.shape
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return image[:, rows[:, None], cols[None, :]]


def load_image(path, resize_to: tuple[int, int] | None = None) -> np.ndarray:
    """Read PNG/PPM/JPEG into a (3,H,W) float array in [0,1]."""
    from PIL import Image
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    chw = rgb.transpose(2, 0, 1)
    if resize_to is not None:
        chw = resize_nearest(chw, *resize_to)
    return chw


def save_image(path, image: np.ndarray) -> None:
    from PIL import Image
    arr = (np.clip(np.asarray(image), 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)
