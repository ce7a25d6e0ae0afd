"""Walkthrough: compressing card images with the convolutional autoencoder.

Trains two bottleneck widths on a toy corpus and shows the reconstruction
gap; the latent vectors are exactly what the image channel of the card
representation consumes.
"""

import numpy as np

from draftrank.autoencoder import (AutoencoderConfig, encode_image_latent,
                                   resize_nearest, train_autoencoder)


def block_corpus(n=32, h=48, w=32, block=8, seed=0):
    rng = np.random.default_rng(seed)
    blocks = rng.random((n, 3, h // block, w // block)).astype(np.float32)
    return blocks.repeat(block, axis=2).repeat(block, axis=3)


def main():
    images = block_corpus()
    print(f"corpus: {images.shape[0]} images of shape {images.shape[1:]}")
    for latent in (16, 128):
        cfg = AutoencoderConfig(height=48, width=32, latent_dim=latent, seed=0)
        model, history = train_autoencoder(images, latent, epochs=40, config=cfg)
        print(f"latent {latent:4d}: mse {history[0]:.4f} -> {history[-1]:.4f}")
        z = encode_image_latent(model, images[0])
        print(f"  latent vector length {z.shape[0]}, first values "
              f"{np.round(z[:4], 3)}")

    big = np.zeros((3, 96, 64), dtype=np.float32)
    small = resize_nearest(big, 48, 32)
    print(f"\nnearest-neighbor resizer: {big.shape} -> {small.shape}")


if __name__ == "__main__":
    main()
