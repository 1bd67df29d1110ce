"""Frozen convolutional feature extractors.

A seed-deterministic five-stage conv pyramid stands in for a pretrained
backbone: DIPD reads its deepest stage, the enhancer's perceptual loss matches
all stages. tanh activations keep it smooth everywhere, so finite-difference
gradient checks apply to losses built on top of it. Any object with the same
interface can be plugged in instead.
"""

import numpy as np
import torch
from torch import nn

from .images import to_tensor


class ConvFeatureExtractor(nn.Module):
    """Five conv stages (stride 2 after the first), frozen at construction."""

    def __init__(self, width: int = 16, seed: int = 0):
        super().__init__()
        widths = [width, 2 * width, 4 * width, 8 * width, 8 * width]
        layers = []
        in_ch = 3
        for i, out_ch in enumerate(widths):
            layers.append(nn.Conv2d(in_ch, out_ch, 3, 1 if i == 0 else 2, 1))
            in_ch = out_ch
        self.stages = nn.ModuleList(layers)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            for conv in self.stages:
                nn.init.normal_(conv.weight, std=0.2 / (conv.in_channels ** 0.5))
                nn.init.zeros_(conv.bias)
        self.requires_grad_(False)

    def features(self, x: torch.Tensor) -> list:
        out = []
        h = x
        for conv in self.stages:
            h = torch.tanh(conv(h))
            out.append(h)
        return out

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)[-1]


class RandomConvFeatures:
    """Numpy-facing backend over ConvFeatureExtractor; used by DIPD."""

    name = "random-conv"

    def __init__(self, width: int = 16, seed: int = 0):
        self._net = ConvFeatureExtractor(width, seed)

    def extract(self, image: np.ndarray) -> np.ndarray:
        """Deepest-stage spatial features of one image, as a (C, H', W') array."""
        with torch.no_grad():
            out = self._net(to_tensor(image))
        return out[0].numpy()


def make_feature_backend(name: str, seed: int = 0):
    if name == "random-conv":
        return RandomConvFeatures(seed=seed)
    raise ValueError(f"unknown feature backend '{name}'")
