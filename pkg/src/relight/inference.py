"""Inference-time operations on numpy images: translation, few-shot style
extraction, style truncation and interpolation, timelapse generation."""

from dataclasses import dataclass

import numpy as np
import torch

from .images import as_image, from_tensor, single_from_tensor, to_tensor
from .model import TranslationModel


@dataclass(frozen=True)
class TruncationSpec:
    """Knobs for the truncation trick.

    variance_scale shrinks prior samples toward the origin; interp_alpha blends
    an extracted style toward a target style.
    """

    variance_scale: float = 0.7
    interp_alpha: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.variance_scale <= 1.0:
            raise ValueError("variance_scale must lie in [0, 1]")
        if not 0.0 <= self.interp_alpha <= 1.0:
            raise ValueError("interp_alpha must lie in [0, 1]")


def _check_dims(image: np.ndarray) -> None:
    h, w = image.shape[:2]
    if h % 16 or w % 16:
        raise ValueError(f"image dims must be multiples of 16, got {h}x{w}")


def _style_tensor(style, dim: int) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(style, dtype=np.float32))
    if t.dim() == 1:
        t = t.unsqueeze(0)
    if t.dim() != 2 or t.shape[1] != dim:
        raise ValueError(f"expected a {dim}-dim style code, got shape {tuple(t.shape)}")
    return t


def translate(model: TranslationModel, image: np.ndarray, style) -> np.ndarray:
    """Re-render `image` under `style`; content preserved, mask output discarded."""
    image = as_image(image)
    _check_dims(image)
    with torch.no_grad():
        out = model.translate_tensor(to_tensor(image), _style_tensor(style, model.config.style_dim))
    return single_from_tensor(out)


def translate_batch(model: TranslationModel, images, styles) -> list:
    """Translate same-sized images in one pass; styles is (B, d) or a single code."""
    batch = to_tensor(images)
    if batch.shape[2] % 16 or batch.shape[3] % 16:
        raise ValueError(f"image dims must be multiples of 16, got {tuple(batch.shape[2:])}")
    styles_t = _style_tensor(styles, model.config.style_dim)
    if styles_t.shape[0] == 1 and batch.shape[0] > 1:
        styles_t = styles_t.expand(batch.shape[0], -1)
    if styles_t.shape[0] != batch.shape[0]:
        raise ValueError(f"{batch.shape[0]} images but {styles_t.shape[0]} styles")
    with torch.no_grad():
        out = model.translate_tensor(batch, styles_t)
    return from_tensor(out)


def extract_style(model: TranslationModel, image: np.ndarray) -> np.ndarray:
    image = as_image(image)
    _check_dims(image)
    with torch.no_grad():
        s = model.encode_style(to_tensor(image))
    return s[0].numpy()


def extract_style_fewshot(model: TranslationModel, images) -> np.ndarray:
    """Mean style code over a handful of example images."""
    items = list(images)
    if not items:
        raise ValueError("need at least one image to extract a style")
    codes = [extract_style(model, im) for im in items]
    return np.mean(np.stack(codes), axis=0).astype(np.float32)


def truncate_prior_style(style, spec: TruncationSpec) -> np.ndarray:
    """Shrink a prior sample toward the origin by variance_scale."""
    style = np.asarray(style, dtype=np.float32)
    return style * spec.variance_scale


def interpolate_style(source, target, alpha: float) -> np.ndarray:
    """Linear blend (1 - alpha) * source + alpha * target; alpha in [0, 1]."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    source = np.asarray(source, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if source.shape != target.shape:
        raise ValueError(f"style shapes differ: {source.shape} vs {target.shape}")
    return (1.0 - alpha) * source + alpha * target


def generate_timelapse(model: TranslationModel, image: np.ndarray, guidance,
                       spec: TruncationSpec | None = None) -> list:
    """One output frame per guidance frame, in order.

    Each frame's style is the guidance style pulled toward the input's own
    style by interp_alpha (the truncation trick for extracted styles).
    """
    if spec is None:
        spec = TruncationSpec()
    frames = list(guidance)
    if not frames:
        raise ValueError("guidance sequence is empty")
    own = extract_style(model, image)
    out = []
    for frame in frames:
        target = extract_style(model, frame)
        style = interpolate_style(own, target, spec.interp_alpha)
        out.append(translate(model, image, style))
    return out
