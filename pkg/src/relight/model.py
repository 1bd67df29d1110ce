"""Translation networks.

Content encoder (two stride-2 stages, four residual blocks, 5-channel skip
taps), style encoder (four stride-2 stages, global average pool), a decoder
whose residual blocks and skip blocks are modulated by adaptive instance
normalization, and two multiscale patch discriminators (unconditional and
style-projection conditional).
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import Config

# epsilon added to the spatial std (not the variance) inside every
# instance-normalization in this package
INSTANCE_NORM_EPS = 1e-5

SKIP_CHANNELS = 5


def adain(features: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor,
          eps: float = INSTANCE_NORM_EPS) -> torch.Tensor:
    """Adaptive instance normalization.

    Normalizes each channel of `features` to zero mean and unit std over its
    spatial positions (population std, eps added to the std), then applies the
    per-channel affine (scale, shift). Accepts (B, C, H, W) with parameters of
    shape (C,) or (B, C), or an unbatched (C, H, W) tensor.
    """
    squeeze = False
    if features.dim() == 3:
        features = features.unsqueeze(0)
        squeeze = True
    if features.dim() != 4:
        raise ValueError(f"expected (B, C, H, W) features, got shape {tuple(features.shape)}")
    b, c = features.shape[:2]
    scale = torch.as_tensor(scale, dtype=features.dtype, device=features.device)
    shift = torch.as_tensor(shift, dtype=features.dtype, device=features.device)
    if scale.dim() == 1:
        scale = scale.unsqueeze(0)
    if shift.dim() == 1:
        shift = shift.unsqueeze(0)
    if scale.shape[-1] != c or shift.shape[-1] != c:
        raise ValueError(
            f"per-channel parameters have {scale.shape[-1]}/{shift.shape[-1]} entries, "
            f"features have {c} channels")
    mean = features.mean(dim=(2, 3), keepdim=True)
    std = features.std(dim=(2, 3), correction=0, keepdim=True)
    normalized = (features - mean) / (std + eps)
    out = scale.reshape(-1, c, 1, 1) * normalized + shift.reshape(-1, c, 1, 1)
    return out.squeeze(0) if squeeze else out


@dataclass
class ContentCode:
    """Spatial content representation: main tensor plus two 5-channel skip taps.

    skips[0] lives at half resolution, skips[1] at quarter resolution.
    """

    main: torch.Tensor
    skips: tuple

    def detach(self) -> "ContentCode":
        return ContentCode(self.main.detach(), tuple(s.detach() for s in self.skips))


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.norm2 = nn.InstanceNorm2d(channels)

    def forward(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return x + h


class AdainResidualBlock(nn.Module):
    """Residual block with a single AdaIN site between its convolutions."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, x, scale, shift):
        h = F.relu(adain(self.conv1(x), scale, shift))
        return x + self.conv2(h)


class SkipAdainBlock(nn.Module):
    """Convolutional block applied to a skip tap before fusion, with AdaIN."""

    def __init__(self, channels: int = SKIP_CHANNELS):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, x, scale, shift):
        return adain(self.conv(x), scale, shift)


class ContentEncoder(nn.Module):
    """Two stride-2 downsamplings and four residual blocks.

    Emits the main code at quarter resolution and a 5-channel tap after each
    downsampling.
    """

    def __init__(self, base_channels: int):
        super().__init__()
        w = base_channels
        self.stem = nn.Sequential(nn.Conv2d(3, w, 3, 1, 1), nn.InstanceNorm2d(w), nn.ReLU())
        self.down1 = nn.Sequential(nn.Conv2d(w, 2 * w, 4, 2, 1), nn.InstanceNorm2d(2 * w), nn.ReLU())
        self.down2 = nn.Sequential(nn.Conv2d(2 * w, 4 * w, 4, 2, 1), nn.InstanceNorm2d(4 * w), nn.ReLU())
        self.skip_tap1 = nn.Conv2d(2 * w, SKIP_CHANNELS, 1)
        self.skip_tap2 = nn.Conv2d(4 * w, SKIP_CHANNELS, 1)
        self.blocks = nn.ModuleList(ResidualBlock(4 * w) for _ in range(4))

    def forward(self, x) -> ContentCode:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"content encoder needs dims divisible by 4, got {tuple(x.shape[2:])}")
        h = self.stem(x)
        h = self.down1(h)
        skip_half = self.skip_tap1(h)
        h = self.down2(h)
        skip_quarter = self.skip_tap2(h)
        for block in self.blocks:
            h = block(h)
        return ContentCode(main=h, skips=(skip_half, skip_quarter))


class StyleEncoder(nn.Module):
    """Four stride-2 downsamplings, a 1x1 compression to d channels, global pool."""

    def __init__(self, width: int, style_dim: int):
        super().__init__()
        w = width
        self.net = nn.Sequential(
            nn.Conv2d(3, w, 3, 1, 1), nn.ReLU(),
            nn.Conv2d(w, 2 * w, 4, 2, 1), nn.ReLU(),
            nn.Conv2d(2 * w, 4 * w, 4, 2, 1), nn.ReLU(),
            nn.Conv2d(4 * w, 4 * w, 4, 2, 1), nn.ReLU(),
            nn.Conv2d(4 * w, 4 * w, 4, 2, 1), nn.ReLU(),
        )
        self.head = nn.Conv2d(4 * w, style_dim, 1)

    def forward(self, x) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % 16 or x.shape[3] % 16:
            raise ValueError(f"style encoder needs dims divisible by 16, got {tuple(x.shape[2:])}")
        h = self.head(self.net(x))
        return h.mean(dim=(2, 3))


class StyleMapper(nn.Module):
    """Three fully-connected layers mapping a style code to every AdaIN (scale, shift).

    One pair per site, laid out site-major as [scale_i, shift_i]. With all
    weights zero the output equals the final-layer bias.
    """

    def __init__(self, style_dim: int, site_channels, hidden: int):
        super().__init__()
        self.site_channels = tuple(site_channels)
        total = sum(2 * c for c in self.site_channels)
        self.net = nn.Sequential(
            nn.Linear(style_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, total),
        )
        final = self.net[-1]
        # start near identity modulation: scales at 1, shifts at 0, small weights
        nn.init.normal_(final.weight, std=0.01)
        with torch.no_grad():
            bias = final.bias.view(-1)
            offset = 0
            for c in self.site_channels:
                bias[offset:offset + c].fill_(1.0)
                bias[offset + c:offset + 2 * c].fill_(0.0)
                offset += 2 * c

    def forward(self, style) -> list:
        if style.dim() == 1:
            style = style.unsqueeze(0)
        raw = self.net(style)
        params = []
        offset = 0
        for c in self.site_channels:
            params.append((raw[:, offset:offset + c], raw[:, offset + c:offset + 2 * c]))
            offset += 2 * c
        return params


class Generator(nn.Module):
    """Five AdaIN residual blocks, two upsamplings with AdaIN-processed skip fusion.

    The final convolution emits 3 + K channels: a tanh image and raw
    segmentation logits. AdaIN sites in forward order: the five residual
    blocks, the quarter-resolution skip block, the half-resolution skip block.
    """

    def __init__(self, content_channels: int, class_count: int):
        super().__init__()
        cc = content_channels
        if cc % 4:
            raise ValueError("content_channels must be divisible by 4")
        self.class_count = class_count
        self.blocks = nn.ModuleList(AdainResidualBlock(cc) for _ in range(5))
        self.skip_block_quarter = SkipAdainBlock()
        self.skip_block_half = SkipAdainBlock()
        self.up1 = nn.Conv2d(cc + SKIP_CHANNELS, cc // 2, 3, 1, 1)
        self.up2 = nn.Conv2d(cc // 2 + SKIP_CHANNELS, cc // 4, 3, 1, 1)
        self.head = nn.Conv2d(cc // 4, 3 + class_count, 3, 1, 1)

    @property
    def adain_site_channels(self) -> tuple:
        cc = self.blocks[0].conv1.in_channels
        return (cc,) * 5 + (SKIP_CHANNELS, SKIP_CHANNELS)

    def forward(self, content: ContentCode, adain_params):
        if len(adain_params) != 7:
            raise ValueError(f"expected 7 AdaIN parameter pairs, got {len(adain_params)}")
        skip_half, skip_quarter = content.skips
        h = content.main
        for block, (scale, shift) in zip(self.blocks, adain_params[:5]):
            h = block(h, scale, shift)
        tap_q = self.skip_block_quarter(skip_quarter, *adain_params[5])
        h = torch.cat([h, tap_q], dim=1)
        h = F.relu(self.up1(F.interpolate(h, scale_factor=2, mode="nearest")))
        tap_h = self.skip_block_half(skip_half, *adain_params[6])
        h = torch.cat([h, tap_h], dim=1)
        h = F.relu(self.up2(F.interpolate(h, scale_factor=2, mode="nearest")))
        out = self.head(h)
        return torch.tanh(out[:, :3]), out[:, 3:]


class PatchDiscriminator(nn.Module):
    """Patch discriminator with three stride-2 levels and an optional projection head.

    3x3 kernels keep every level defined down to 16x16 inputs on the smallest
    pyramid branch. When built with a style dimension, the score map receives
    the inner product of a (bias-free) style embedding with globally pooled
    features.
    """

    def __init__(self, width: int, style_dim: int | None = None):
        super().__init__()
        w = width
        self.body = nn.Sequential(
            nn.Conv2d(3, w, 3, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(w, 2 * w, 3, 2, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(2 * w, 4 * w, 3, 2, 1), nn.LeakyReLU(0.2),
        )
        self.score = nn.Conv2d(4 * w, 1, 3, 1, 1)
        self.embed = nn.Linear(style_dim, 4 * w, bias=False) if style_dim else None

    def forward(self, x, style=None):
        h = self.body(x)
        s = self.score(h)
        if self.embed is not None:
            if style is None:
                raise ValueError("conditional discriminator needs a style code")
            proj = (self.embed(style) * h.mean(dim=(2, 3))).sum(dim=1)
            s = s + proj.view(-1, 1, 1, 1)
        elif style is not None:
            raise ValueError("unconditional discriminator does not take a style code")
        return s


class MultiScaleDiscriminator(nn.Module):
    """Three patch discriminators over a 2x average-pool pyramid."""

    def __init__(self, width: int, style_dim: int | None = None, scales: int = 3):
        super().__init__()
        self.heads = nn.ModuleList(PatchDiscriminator(width, style_dim) for _ in range(scales))

    def forward(self, x, style=None) -> list:
        scores = []
        for head in self.heads:
            scores.append(head(x, style))
            x = F.avg_pool2d(x, 2)
        return scores


class TranslationModel(nn.Module):
    """The full translation system: encoders, mapper, decoder, both discriminators."""

    def __init__(self, config: Config):
        super().__init__()
        self.config = config
        self.content_encoder = ContentEncoder(config.base_channels)
        self.style_encoder = StyleEncoder(config.style_channels, config.style_dim)
        self.generator = Generator(config.content_channels, config.class_count)
        self.style_mapper = StyleMapper(
            config.style_dim, self.generator.adain_site_channels, config.mapper_hidden)
        self.discriminator = MultiScaleDiscriminator(config.disc_channels)
        self.cond_discriminator = MultiScaleDiscriminator(config.disc_channels, config.style_dim)

    def encode_content(self, images: torch.Tensor) -> ContentCode:
        return self.content_encoder(images)

    def encode_style(self, images: torch.Tensor) -> torch.Tensor:
        return self.style_encoder(images)

    def decode(self, content: ContentCode, style: torch.Tensor):
        """Returns (image, segmentation logits)."""
        return self.generator(content, self.style_mapper(style))

    def translate_tensor(self, images: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        image, _ = self.decode(self.encode_content(images), style)
        return image

    def discriminate(self, images: torch.Tensor, style: torch.Tensor | None = None) -> list:
        if style is None:
            return self.discriminator(images)
        return self.cond_discriminator(images, style)

    def generator_modules(self) -> list:
        return [self.content_encoder, self.style_encoder, self.generator, self.style_mapper]

    def generator_parameters(self):
        for module in self.generator_modules():
            yield from module.parameters()

    def discriminator_parameters(self):
        yield from self.discriminator.parameters()
        yield from self.cond_discriminator.parameters()


def build_model(config: Config, seed: int | None = None) -> TranslationModel:
    """Build a model with deterministic initialization, leaving global RNG untouched."""
    if seed is None:
        seed = config.seed
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = TranslationModel(config)
    return model
