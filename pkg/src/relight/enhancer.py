"""High-resolution enhancement by shift decomposition.

A hi-res image is split into sixteen quarter-resolution pieces, one per
integer shift (dy, dx) in {0..3}^2. Each piece goes through the translator at
its native working resolution; a residual-in-residual dense merging network
fuses the sixteen translated pieces back into one hi-res output. Strided
decomposition is exactly invertible; the bilinear variant matches what the
merge network sees at inference time.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import Config
from .features import ConvFeatureExtractor
from .images import as_image, from_tensor, single_from_tensor, to_tensor
from .losses import NonFiniteLossError, l1_loss, lsgan_d_loss, lsgan_g_loss, scalar
from .model import TranslationModel
from .trainer import sample_prior_style

FACTOR = 4
PIECE_COUNT = FACTOR * FACTOR
MERGE_CHANNELS = 3 * PIECE_COUNT

# row-major by (dy, dx)
SHIFT_ORDER = tuple((dy, dx) for dy in range(FACTOR) for dx in range(FACTOR))

MODE_STRIDED = "strided"
MODE_BILINEAR = "bilinear"


@dataclass
class ShiftStack:
    """Sixteen aligned pieces of one image plus the order/mode metadata."""

    pieces: np.ndarray  # (16, h, w, 3) float32
    mode: str
    shifts: tuple = field(default=SHIFT_ORDER)

    def __post_init__(self):
        self.pieces = np.asarray(self.pieces, dtype=np.float32)
        if self.pieces.ndim != 4 or self.pieces.shape[0] != PIECE_COUNT or self.pieces.shape[3] != 3:
            raise ValueError(f"expected (16, h, w, 3) pieces, got {self.pieces.shape}")
        if self.mode not in (MODE_STRIDED, MODE_BILINEAR):
            raise ValueError(f"unknown decomposition mode '{self.mode}'")
        self.shifts = tuple(tuple(s) for s in self.shifts)
        if len(self.shifts) != PIECE_COUNT:
            raise ValueError("shift order metadata must list 16 shifts")


def _check_hi_dims(hi: np.ndarray) -> None:
    h, w = hi.shape[:2]
    if h % FACTOR or w % FACTOR:
        raise ValueError(f"hi-res dims must be multiples of {FACTOR}, got {h}x{w}")
    if h < FACTOR or w < FACTOR:
        raise ValueError("image too small to decompose")


def _shift_toward_origin(hi: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Move content up-left by (dy, dx); vacated bottom/right filled with zeros."""
    out = np.zeros_like(hi)
    h, w = hi.shape[:2]
    out[: h - dy, : w - dx] = hi[dy:, dx:]
    return out


def decompose_shifts(hi: np.ndarray, mode: str) -> ShiftStack:
    """Split a hi-res image into 16 quarter-resolution shifted pieces.

    strided: piece[r, c] = hi[4r + dy, 4c + dx] (exactly invertible).
    bilinear: shift with zero fill, then 4x bilinear downsample
    (half-pixel-centered), matching the enhancer's inference-time input.
    """
    hi = as_image(hi)
    _check_hi_dims(hi)
    if mode == MODE_STRIDED:
        pieces = np.stack([hi[dy::FACTOR, dx::FACTOR] for dy, dx in SHIFT_ORDER])
        return ShiftStack(pieces, MODE_STRIDED)
    if mode == MODE_BILINEAR:
        shifted = np.stack([_shift_toward_origin(hi, dy, dx) for dy, dx in SHIFT_ORDER])
        t = torch.from_numpy(shifted).permute(0, 3, 1, 2)
        small = F.interpolate(t, scale_factor=1.0 / FACTOR, mode="bilinear",
                              align_corners=False, antialias=False)
        pieces = small.permute(0, 2, 3, 1).contiguous().numpy()
        return ShiftStack(pieces, MODE_BILINEAR)
    raise ValueError(f"unknown decomposition mode '{mode}'")


def recompose_strided(stack: ShiftStack) -> np.ndarray:
    """Exact inverse of strided decomposition."""
    if stack.mode != MODE_STRIDED:
        raise ValueError(f"cannot recompose '{stack.mode}' pieces exactly; need strided")
    if stack.shifts != SHIFT_ORDER:
        raise ValueError("piece order metadata does not match the canonical shift order")
    _, h, w, _ = stack.pieces.shape
    out = np.empty((h * FACTOR, w * FACTOR, 3), dtype=np.float32)
    for piece, (dy, dx) in zip(stack.pieces, SHIFT_ORDER):
        out[dy::FACTOR, dx::FACTOR] = piece
    return out


def stack_to_tensor(stack: ShiftStack) -> torch.Tensor:
    """Pack pieces into a (1, 48, h, w) tensor, piece-major with contiguous RGB."""
    t = torch.from_numpy(np.ascontiguousarray(stack.pieces)).permute(0, 3, 1, 2)
    return t.reshape(1, MERGE_CHANNELS, t.shape[2], t.shape[3])


# -- Lanczos-3 resampling (the non-learned baseline) --------------------------


def _lanczos3_kernel(x: np.ndarray) -> np.ndarray:
    out = np.sinc(x) * np.sinc(x / 3.0)
    return np.where(np.abs(x) < 3.0, out, 0.0)


def _resample_axis_weights(n_in: int, n_out: int):
    """Sample positions and normalized Lanczos-3 weights for one axis."""
    scale = n_out / n_in
    support = 3.0 / min(scale, 1.0)  # stretch the kernel when shrinking
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(int) + 1
    width = int(math.ceil(2 * support)) + 1
    offsets = np.arange(width)
    idx = left[:, None] + offsets[None, :]
    dist = (idx - centers[:, None]) * min(scale, 1.0)
    weights = _lanczos3_kernel(dist)
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)  # edge clamp
    return idx, weights


def _resample_axis(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    arr = np.moveaxis(arr, axis, 0)
    idx, weights = _resample_axis_weights(arr.shape[0], n_out)
    gathered = arr[idx]  # (n_out, width, ...)
    w = weights.reshape(weights.shape + (1,) * (arr.ndim - 1))
    out = (gathered * w).sum(axis=1)
    return np.moveaxis(out, 0, axis)


def lanczos_resize(image: np.ndarray, scale: float) -> np.ndarray:
    """Separable Lanczos-3 resize; constants are preserved exactly up to fp error."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    image = as_image(image)
    h, w = image.shape[:2]
    out_h, out_w = int(round(h * scale)), int(round(w * scale))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"scale {scale} collapses the image")
    work = image.astype(np.float64)
    work = _resample_axis(work, out_h, axis=0)
    work = _resample_axis(work, out_w, axis=1)
    return work.astype(np.float32)


# -- merging network (residual-in-residual dense) -----------------------------


class DenseBlock(nn.Module):
    def __init__(self, channels: int, growth: int):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv2d(channels + i * growth, growth if i < 4 else channels, 3, 1, 1)
            for i in range(5)
        )

    def forward(self, x):
        feats = [x]
        for i, conv in enumerate(self.convs):
            h = conv(torch.cat(feats, dim=1))
            if i < 4:
                h = F.leaky_relu(h, 0.2)
                feats.append(h)
        return x + 0.2 * h


class RRDB(nn.Module):
    """Residual-in-residual dense block: three dense blocks under a scaled skip."""

    def __init__(self, channels: int, growth: int):
        super().__init__()
        self.blocks = nn.Sequential(
            DenseBlock(channels, growth),
            DenseBlock(channels, growth),
            DenseBlock(channels, growth),
        )

    def forward(self, x):
        return x + 0.2 * self.blocks(x)


class MergingNetwork(nn.Module):
    """Fuses 16 translated pieces (48 channels) into one 4x-resolution image."""

    def __init__(self, features: int = 64, growth: int = 32, blocks: int = 5):
        super().__init__()
        nf = features
        self.conv_first = nn.Conv2d(MERGE_CHANNELS, nf, 3, 1, 1)
        self.body = nn.Sequential(*(RRDB(nf, growth) for _ in range(blocks)))
        self.conv_body = nn.Conv2d(nf, nf, 3, 1, 1)
        self.up1 = nn.Conv2d(nf, nf * 4, 3, 1, 1)
        self.up2 = nn.Conv2d(nf, nf * 4, 3, 1, 1)
        self.conv_hr = nn.Conv2d(nf, nf, 3, 1, 1)
        self.conv_last = nn.Conv2d(nf, 3, 3, 1, 1)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != MERGE_CHANNELS:
            raise ValueError(f"expected (B, {MERGE_CHANNELS}, h, w) input, got {tuple(x.shape)}")
        feat = self.conv_first(x)
        feat = feat + self.conv_body(self.body(feat))
        feat = F.leaky_relu(F.pixel_shuffle(self.up1(feat), 2), 0.2)
        feat = F.leaky_relu(F.pixel_shuffle(self.up2(feat), 2), 0.2)
        feat = F.leaky_relu(self.conv_hr(feat), 0.2)
        return torch.tanh(self.conv_last(feat))


class EnhancerScaleDiscriminator(nn.Module):
    """Five conv layers; returns every intermediate activation plus the score map."""

    def __init__(self, width: int):
        super().__init__()
        w = width
        self.layers = nn.ModuleList([
            nn.Conv2d(3, w, 3, 2, 1),
            nn.Conv2d(w, 2 * w, 3, 2, 1),
            nn.Conv2d(2 * w, 4 * w, 3, 2, 1),
            nn.Conv2d(4 * w, 8 * w, 3, 1, 1),
            nn.Conv2d(8 * w, 1, 3, 1, 1),
        ])

    def forward(self, x) -> list:
        feats = []
        h = x
        for i, conv in enumerate(self.layers):
            h = conv(h)
            if i < len(self.layers) - 1:
                h = F.leaky_relu(h, 0.2)
            feats.append(h)
        return feats


class EnhancerDiscriminator(nn.Module):
    """Three scales over an average-pool pyramid, five layers each."""

    def __init__(self, width: int, scales: int = 3):
        super().__init__()
        self.heads = nn.ModuleList(EnhancerScaleDiscriminator(width) for _ in range(scales))

    def forward(self, x) -> list:
        out = []
        for head in self.heads:
            out.append(head(x))
            x = F.avg_pool2d(x, 2)
        return out

    @staticmethod
    def scores(features: list) -> list:
        return [feats[-1] for feats in features]


def perceptual_loss(fake: torch.Tensor, real: torch.Tensor,
                    extractor: ConvFeatureExtractor) -> torch.Tensor:
    """L1 between extractor stages of fake and real, averaged over stages."""
    fake_feats = extractor.features(fake)
    real_feats = extractor.features(real)
    total = 0.0
    for ff, rf in zip(fake_feats, real_feats):
        total = total + l1_loss(ff, rf.detach())
    return total / len(fake_feats)


def feature_matching_loss(fake_features: list, real_features: list) -> torch.Tensor:
    """L1 between discriminator activations of fake and real, over scales and layers.

    The final score map is excluded; real activations are detached.
    """
    total = 0.0
    count = 0
    for ff, rf in zip(fake_features, real_features):
        for f, r in zip(ff[:-1], rf[:-1]):
            total = total + l1_loss(f, r.detach())
            count += 1
    if count == 0:
        raise ValueError("no feature maps to match")
    return total / count


class EnhancerState:
    """Merging network, discriminator, their optimizers, and the frozen
    perceptual extractor (rebuilt deterministically from the config seed)."""

    def __init__(self, config: Config, seed: int | None = None):
        if seed is None:
            seed = config.seed
        self.config = config
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.network = MergingNetwork(config.enh_channels, config.enh_growth, blocks=5)
            self.discriminator = EnhancerDiscriminator(config.enh_channels // 2 or 1)
        self.perceptual = ConvFeatureExtractor(seed=seed)
        betas = (config.beta1, config.beta2)
        self.g_opt = torch.optim.Adam(self.network.parameters(), lr=config.enh_lr, betas=betas)
        self.d_opt = torch.optim.Adam(self.discriminator.parameters(), lr=config.enh_lr, betas=betas)
        self.iteration = 0

    def merge_tensor(self, stacks: torch.Tensor) -> torch.Tensor:
        return self.network(stacks)

    def training_step(self, batch) -> dict:
        """One D update then one G update on a mixed paired/unpaired batch.

        `batch` is a list of (ShiftStack, target_image_or_None). Paired samples
        contribute perceptual + feature-matching + adversarial; unpaired
        samples contribute the adversarial term only.
        """
        if not batch:
            raise ValueError("empty batch")
        cfg = self.config
        paired = [(s, t) for s, t in batch if t is not None]
        unpaired = [s for s, t in batch if t is None]

        fake_p = fake_u = None
        reals = None
        if paired:
            stacks = torch.cat([stack_to_tensor(s) for s, _ in paired])
            fake_p = self.network(stacks)
            reals = to_tensor([t for _, t in paired])
            if reals.shape[2:] != fake_p.shape[2:]:
                raise ValueError(
                    f"target size {tuple(reals.shape[2:])} does not match "
                    f"merged output {tuple(fake_p.shape[2:])}")
        if unpaired:
            stacks_u = torch.cat([stack_to_tensor(s) for s in unpaired])
            fake_u = self.network(stacks_u)

        # discriminator step; with no paired reals in the batch, only fakes push
        self.d_opt.zero_grad(set_to_none=True)
        d_loss = 0.0
        fakes_detached = [f.detach() for f in (fake_p, fake_u) if f is not None]
        if reals is not None:
            real_scores = EnhancerDiscriminator.scores(self.discriminator(reals))
            for f in fakes_detached:
                d_loss = d_loss + lsgan_d_loss(
                    real_scores, EnhancerDiscriminator.scores(self.discriminator(f)))
        else:
            for f in fakes_detached:
                fake_scores = EnhancerDiscriminator.scores(self.discriminator(f))
                d_loss = d_loss + sum(s.pow(2).mean() for s in fake_scores) / len(fake_scores)
        d_loss = cfg.adversarial_weight * d_loss
        if not math.isfinite(scalar(d_loss)):
            raise NonFiniteLossError(
                f"enhancer discriminator loss is non-finite at iteration {self.iteration}")
        d_loss.backward()
        self.d_opt.step()

        # generator step against the updated discriminator
        for p in self.discriminator.parameters():
            p.requires_grad_(False)
        try:
            zero = torch.zeros(())
            perc = fm = adv = zero
            if fake_p is not None:
                real_features = self.discriminator(reals)
                fake_features = self.discriminator(fake_p)
                perc = perceptual_loss(fake_p, reals, self.perceptual)
                fm = feature_matching_loss(fake_features, real_features)
                adv = adv + lsgan_g_loss(EnhancerDiscriminator.scores(fake_features))
            if fake_u is not None:
                adv = adv + lsgan_g_loss(
                    EnhancerDiscriminator.scores(self.discriminator(fake_u)))
            g_loss = (cfg.perceptual_weight * perc
                      + cfg.feature_matching_weight * fm
                      + cfg.adversarial_weight * adv)
            named = {"perceptual": perc, "feature_matching": fm,
                     "adversarial": adv, "d_adversarial": d_loss, "total": g_loss}
            for name, value in named.items():
                if not math.isfinite(scalar(value)):
                    raise NonFiniteLossError(
                        f"enhancer loss term '{name}' is non-finite at iteration {self.iteration}")
            self.g_opt.zero_grad(set_to_none=True)
            g_loss.backward()
            self.g_opt.step()
        finally:
            for p in self.discriminator.parameters():
                p.requires_grad_(True)

        self.iteration += 1
        return {k: scalar(v) for k, v in named.items()}


def merge(stack: ShiftStack, state: EnhancerState) -> np.ndarray:
    """Fuse one shift stack into a hi-res image with the merging network."""
    with torch.no_grad():
        out = state.merge_tensor(stack_to_tensor(stack))
    return single_from_tensor(out)


def _translate_pieces(model: TranslationModel, pieces: np.ndarray,
                      styles: torch.Tensor) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(pieces)).permute(0, 3, 1, 2)
    if t.shape[2] % 16 or t.shape[3] % 16:
        raise ValueError(
            f"pieces of size {tuple(t.shape[2:])} are not translatable; "
            f"hi-res dims must be multiples of {16 * FACTOR}")
    # one piece per forward pass keeps peak memory at piece scale, which is the
    # entire point of decomposing instead of translating at full resolution
    out = []
    with torch.no_grad():
        for i in range(t.shape[0]):
            out.append(model.translate_tensor(t[i:i + 1], styles[i:i + 1]))
    return np.stack(from_tensor(torch.cat(out)))


def build_enhancer_dataset(hi_images, model: TranslationModel, rng: torch.Generator,
                           mode: str = MODE_BILINEAR):
    """Paired and unpaired training samples from hi-res images.

    Paired: every piece re-rendered with its own extracted style (autoencoder
    mode), target = the original hi-res image. Unpaired: all pieces share one
    prior-sampled style; no target.
    """
    paired = []
    unpaired = []
    for hi in hi_images:
        hi = as_image(hi)
        stack = decompose_shifts(hi, mode)
        pieces_t = torch.from_numpy(np.ascontiguousarray(stack.pieces)).permute(0, 3, 1, 2)
        if pieces_t.shape[2] % 16 or pieces_t.shape[3] % 16:
            raise ValueError(f"hi-res dims must be multiples of {16 * FACTOR} for translation")
        with torch.no_grad():
            own_styles = torch.cat([model.encode_style(pieces_t[i:i + 1])
                                    for i in range(PIECE_COUNT)])
        own = _translate_pieces(model, stack.pieces, own_styles)
        paired.append((ShiftStack(own, mode), hi))

        shared = sample_prior_style(rng, model.config.style_dim)
        shared_batch = shared.unsqueeze(0).expand(PIECE_COUNT, -1)
        randomized = _translate_pieces(model, stack.pieces, shared_batch)
        unpaired.append((ShiftStack(randomized, mode), None))
    return paired, unpaired


def enhance_full(hi: np.ndarray, style, model: TranslationModel,
                 state: EnhancerState, mode: str = MODE_BILINEAR) -> np.ndarray:
    """Translate a hi-res image piecewise under one style, then merge.

    Equivalent to merge over the translated bilinear decomposition, but never
    runs the translator above piece resolution.
    """
    hi = as_image(hi)
    stack = decompose_shifts(hi, mode)
    style_t = torch.as_tensor(np.asarray(style, dtype=np.float32))
    if style_t.dim() == 1:
        style_t = style_t.unsqueeze(0)
    styles = style_t.expand(PIECE_COUNT, -1)
    translated = _translate_pieces(model, stack.pieces, styles)
    return merge(ShiftStack(translated, mode), state)
