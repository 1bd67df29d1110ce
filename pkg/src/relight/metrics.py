"""Evaluation metrics behind pluggable backends.

DIPD: L2 between instance-normalized deep features of an image and its
translation (lower = content better preserved). IS: exp of the mean KL between
per-image class posteriors and their marginal. CIS: the same computed within
each group of translations of one content image, then averaged (higher =
more diverse relighting).
"""

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import DAYTIME_CLASS_NAMES
from .features import RandomConvFeatures
from .images import as_image, to_tensor
from .model import INSTANCE_NORM_EPS

PROB_ATOL = 1e-6


def _check_probs(p: np.ndarray, backend_name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"backend '{backend_name}' returned a bad probability vector")
    if (p < -PROB_ATOL).any() or abs(float(p.sum()) - 1.0) > PROB_ATOL:
        raise ValueError(f"backend '{backend_name}' returned an unnormalized distribution")
    return np.clip(p, 0.0, None)


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats with the 0 log 0 = 0 convention."""
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


class ConstantClassifier:
    """Uniform output regardless of input; IS/CIS over it are exactly 1."""

    name = "constant"

    def __init__(self, classes: int = len(DAYTIME_CLASS_NAMES)):
        self.classes = classes

    def predict(self, image) -> np.ndarray:
        return np.full(self.classes, 1.0 / self.classes)


class TableClassifier:
    """Synthetic classifier defined by an explicit image -> probability table."""

    name = "table"

    def __init__(self, table: dict):
        self.table = dict(table)

    @classmethod
    def from_pairs(cls, images, probs) -> "TableClassifier":
        images = list(images)
        probs = list(probs)
        if len(images) != len(probs):
            raise ValueError("need one probability row per image")
        return cls({cls.key(im): np.asarray(p, dtype=np.float64) for im, p in zip(images, probs)})

    @staticmethod
    def key(image) -> bytes:
        return as_image(image).tobytes()

    def predict(self, image) -> np.ndarray:
        k = self.key(image)
        if k not in self.table:
            raise KeyError("image not present in the classifier table")
        return self.table[k]


class ToyConvClassifier(nn.Module):
    """Small trainable conv classifier for end-to-end smoke tests.

    Not a stand-in for a properly trained daytime classifier; it exists so the
    evaluation pipeline can be exercised without external weights.
    """

    name = "toy"

    def __init__(self, classes: int = len(DAYTIME_CLASS_NAMES), width: int = 8, seed: int = 0):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.body = nn.Sequential(
                nn.Conv2d(3, width, 3, 2, 1), nn.ReLU(),
                nn.Conv2d(width, 2 * width, 3, 2, 1), nn.ReLU(),
                nn.Conv2d(2 * width, 2 * width, 3, 2, 1), nn.ReLU(),
            )
            self.head = nn.Linear(2 * width, classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.body(x).mean(dim=(2, 3)))

    def predict(self, image) -> np.ndarray:
        with torch.no_grad():
            logits = self.forward(to_tensor(image))
        return F.softmax(logits[0], dim=0).numpy().astype(np.float64)


def make_classifier_backend(name: str, seed: int = 0):
    if name == "constant":
        return ConstantClassifier()
    if name == "toy":
        return ToyConvClassifier(seed=seed)
    raise ValueError(f"unknown classifier backend '{name}'")


def _instance_normalize(features: np.ndarray) -> np.ndarray:
    """Zero mean, unit std per channel over spatial positions."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError(f"expected (C, H, W) features, got shape {f.shape}")
    if f.shape[1] * f.shape[2] < 2:
        # a single spatial position normalizes to zero; the distance would
        # silently vanish for any pair of inputs
        raise ValueError("features have no spatial extent; use larger input images")
    mean = f.mean(axis=(1, 2), keepdims=True)
    std = f.std(axis=(1, 2), keepdims=True)
    return (f - mean) / (std + INSTANCE_NORM_EPS)


def dipd(original, translated, backend=None) -> float:
    """Domain-invariant perceptual distance between an image and its translation."""
    if backend is None:
        backend = RandomConvFeatures()
    original = as_image(original)
    translated = as_image(translated)
    if original.shape != translated.shape:
        raise ValueError(f"shape mismatch: {original.shape} vs {translated.shape}")
    fa = _instance_normalize(backend.extract(original))
    fb = _instance_normalize(backend.extract(translated))
    if fa.shape != fb.shape:
        raise ValueError("backend returned differently shaped features")
    return float(np.sqrt(np.sum((fa - fb) ** 2)))


def _posteriors(images, backend) -> np.ndarray:
    items = list(images)
    if not items:
        raise ValueError("no images given")
    rows = [_check_probs(backend.predict(im), getattr(backend, "name", "?")) for im in items]
    sizes = {r.size for r in rows}
    if len(sizes) != 1:
        raise ValueError("backend returned inconsistent class counts")
    return np.stack(rows)


def inception_score(images, backend) -> float:
    """exp(mean_i KL(p(y|x_i) || marginal)). 1 <= IS <= number of classes."""
    probs = _posteriors(images, backend)
    marginal = probs.mean(axis=0)
    kls = [_kl(p, marginal) for p in probs]
    return float(math.exp(float(np.mean(kls))))


def conditional_inception_score(groups, backend) -> float:
    """IS computed within each group (translations of one content), then averaged."""
    group_list = [list(g) for g in groups]
    if not group_list or any(not g for g in group_list):
        raise ValueError("need at least one non-empty group")
    inner = []
    for group in group_list:
        probs = _posteriors(group, backend)
        marginal = probs.mean(axis=0)
        inner.append(float(np.mean([_kl(p, marginal) for p in probs])))
    return float(math.exp(float(np.mean(inner))))


def metric_record(metric: str, value: float, count: int, backend: str) -> dict:
    return {"metric": metric, "value": value, "count": count, "backend": backend}
