"""Synthetic toy data for desk-scale experiments and tests.

Smooth random color fields with spatially coherent masks derived from a
shared latent field, so segmentation is learnable from image content.
"""

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .dataio import save_image, save_mask


def _smooth_field(rng: np.random.Generator, size: int, channels: int, grid: int = 4,
                  amplitude: float = 1.0) -> np.ndarray:
    coeffs = rng.normal(0.0, amplitude, size=(1, channels, grid, grid)).astype(np.float32)
    field = F.interpolate(torch.from_numpy(coeffs), size=(size, size),
                          mode="bilinear", align_corners=True)
    return field[0].permute(1, 2, 0).numpy()


def toy_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """A smooth random RGB image comfortably inside (-1, 1)."""
    base = _smooth_field(rng, size, 3, grid=4, amplitude=0.8)
    detail = _smooth_field(rng, size, 3, grid=8, amplitude=0.25)
    return np.tanh(base + detail).astype(np.float32) * 0.9


def toy_mask(rng: np.random.Generator, size: int = 64, classes: int = 9,
             bands: int = 4) -> np.ndarray:
    """A coherent segmentation mask using `bands` of the available classes."""
    field = _smooth_field(rng, size, 1, grid=3)[:, :, 0]
    bands = min(bands, classes)
    edges = np.quantile(field, np.linspace(0, 1, bands + 1)[1:-1])
    labels = np.digitize(field, edges)
    offset = int(rng.integers(0, classes - bands + 1))
    return (labels + offset).astype(np.int64)


def toy_pair(rng: np.random.Generator, size: int = 64, classes: int = 9):
    """An (image, mask) pair whose mask follows the image's own smooth field."""
    image = toy_image(rng, size)
    luminance = image.mean(axis=2)
    edges = np.quantile(luminance, [0.25, 0.5, 0.75])
    mask = np.digitize(luminance, edges).astype(np.int64)
    offset = int(rng.integers(0, classes - 4 + 1))
    return image, mask + offset


def toy_corpus(seed: int, count: int, size: int = 64, classes: int = 9) -> list:
    rng = np.random.default_rng(seed)
    return [toy_pair(rng, size, classes) for _ in range(count)]


def write_toy_dataset(directory, count: int, size: int = 64, seed: int = 0,
                      label_classes: int = 4) -> dict:
    """Write images/, masks/, and labels.tsv under `directory`."""
    root = Path(directory)
    images_dir = root / "images"
    masks_dir = root / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(count):
        image, mask = toy_pair(rng, size)
        name = f"sample_{i:04d}"
        save_image(image, images_dir / f"{name}.png")
        save_mask(mask, masks_dir / f"{name}.png")
        lines.append(f"{name}.png\t{int(rng.integers(label_classes))}")
    labels_file = root / "labels.tsv"
    labels_file.write_text("\n".join(lines) + "\n")
    return {"images_dir": str(images_dir), "masks_dir": str(masks_dir),
            "labels_file": str(labels_file)}
