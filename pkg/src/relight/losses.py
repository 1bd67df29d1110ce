"""Training losses and the weighted objective.

Twelve components: reconstruction (plain / random-style), cross-cycle,
segmentation CE (translated / random-style), adversarial (translated /
random-style), content and style latent L1 (plain / random-style), and the
style distribution moment-matching term over a FIFO pool.
"""

from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F

from .config import Config
from .model import ContentCode

IGNORE_CLASS = -1

REPORT_TERMS = (
    "rec", "rec_r", "cyc", "seg", "seg_r",
    "adv", "adv_r", "content", "content_r",
    "style", "style_r", "dist",
)


def scalar(value) -> float:
    """Plain float from a python number or a (possibly grad-carrying) tensor."""
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def l1_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference. Shapes must match exactly."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def content_l1(a: ContentCode, b: ContentCode) -> torch.Tensor:
    """L1 between content codes, a single element-weighted mean over main and skips."""
    parts_a = (a.main, *a.skips)
    parts_b = (b.main, *b.skips)
    total = 0.0
    count = 0
    for pa, pb in zip(parts_a, parts_b):
        if pa.shape != pb.shape:
            raise ValueError(f"shape mismatch: {tuple(pa.shape)} vs {tuple(pb.shape)}")
        total = total + (pa - pb).abs().sum()
        count += pa.numel()
    return total / count


def segmentation_ce(mask: torch.Tensor, logits: torch.Tensor,
                    ignore_class: int = IGNORE_CLASS) -> torch.Tensor:
    """Per-pixel softmax cross-entropy against an integer mask, averaged over pixels.

    `logits` is (B, K, H, W) or (K, H, W); `mask` matches without the channel
    axis. Pixels labeled `ignore_class` are excluded from the mean.
    """
    if logits.dim() == 3:
        logits = logits.unsqueeze(0)
    if mask.dim() == 2:
        mask = mask.unsqueeze(0)
    if logits.dim() != 4 or mask.dim() != 3:
        raise ValueError(f"bad shapes: logits {tuple(logits.shape)}, mask {tuple(mask.shape)}")
    if mask.shape != (logits.shape[0], logits.shape[2], logits.shape[3]):
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match logits {tuple(logits.shape)}")
    k = logits.shape[1]
    mask = mask.long()
    keep = mask != ignore_class
    if ((mask < 0) & keep).any() or (mask >= k).any():
        bad = mask[((mask < 0) & keep) | (mask >= k)][0].item()
        raise ValueError(f"mask contains class {bad}, valid range is [0, {k}) or {ignore_class}")
    if not keep.any():
        raise ValueError("all pixels are ignored")
    log_probs = F.log_softmax(logits, dim=1)
    gathered = log_probs.gather(1, mask.clamp(min=0).unsqueeze(1)).squeeze(1)
    return -(gathered[keep]).mean()


def _score_mean(scores, transform) -> torch.Tensor:
    if not scores:
        raise ValueError("empty score list")
    total = 0.0
    for s in scores:
        total = total + transform(s).mean()
    return total / len(scores)


def lsgan_d_loss(real_scores: list, fake_scores: list) -> torch.Tensor:
    """Least-squares discriminator loss: mean (real - 1)^2 + mean fake^2.

    Means are per score map, then averaged over scales.
    """
    real = _score_mean(real_scores, lambda s: (s - 1.0) ** 2)
    fake = _score_mean(fake_scores, lambda s: s ** 2)
    return real + fake


def lsgan_g_loss(fake_scores: list) -> torch.Tensor:
    """Least-squares generator loss: mean (fake - 1)^2, averaged over scales."""
    return _score_mean(fake_scores, lambda s: (s - 1.0) ** 2)


class StylePool:
    """FIFO buffer of detached style codes with empirical moment accessors."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("pool capacity must be positive")
        self.capacity = capacity
        self.entries: list[torch.Tensor] = []

    def __len__(self) -> int:
        return len(self.entries)

    def extend_detached(self, styles: torch.Tensor) -> None:
        if styles.dim() == 1:
            styles = styles.unsqueeze(0)
        for row in styles.detach():
            self.entries.append(row.clone())
        if len(self.entries) > self.capacity:
            del self.entries[: len(self.entries) - self.capacity]

    def as_matrix(self) -> torch.Tensor | None:
        if not self.entries:
            return None
        return torch.stack(self.entries)

    def mean(self) -> torch.Tensor:
        m = self.as_matrix()
        if m is None:
            raise ValueError("empty pool has no mean")
        return m.mean(dim=0)

    def cov(self) -> torch.Tensor:
        m = self.as_matrix()
        if m is None:
            raise ValueError("empty pool has no covariance")
        centered = m - m.mean(dim=0, keepdim=True)
        return centered.T @ centered / m.shape[0]


def _as_rows(style: torch.Tensor) -> torch.Tensor:
    t = torch.as_tensor(style)
    if t.dim() == 1:
        t = t.unsqueeze(0)
    if t.dim() != 2:
        raise ValueError(f"style codes must be (d,) or (n, d), got {tuple(t.shape)}")
    return t


def style_distribution_loss(pool: StylePool, s: torch.Tensor, s_prime: torch.Tensor):
    """Moment matching of styles to the unit normal prior.

    Stacks detached pool entries with the live codes s and s_prime, forms the
    empirical mean and population covariance, and returns

        ||mean||_1 + ||cov - I||_1 + ||diag(cov) - 1||_1

    (entrywise absolute sums; the diagonal is counted twice by design) along
    with the pool updated FIFO-style with the detached live codes. Gradients
    flow only through s and s_prime.
    """
    live = torch.cat([_as_rows(s), _as_rows(s_prime)], dim=0)
    stacked = live
    pool_matrix = pool.as_matrix()
    if pool_matrix is not None:
        if pool_matrix.shape[1] != live.shape[1]:
            raise ValueError(
                f"pool holds {pool_matrix.shape[1]}-dim codes, live codes are {live.shape[1]}-dim")
        stacked = torch.cat([pool_matrix.to(live.dtype), live], dim=0)
    n, d = stacked.shape
    if n < 2:
        raise ValueError("need at least two styles for moment matching")
    mean = stacked.mean(dim=0)
    centered = stacked - mean
    cov = centered.T @ centered / n
    eye = torch.eye(d, dtype=cov.dtype, device=cov.device)
    loss = mean.abs().sum() + (cov - eye).abs().sum() + (cov.diagonal() - 1.0).abs().sum()
    pool.extend_detached(live)
    return loss, pool


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 5.0
    lambda2: float = 2.0
    lambda3: float = 3.0
    lambda4: float = 1.0
    lambda5: float = 0.1
    lambda6: float = 4.0
    lambda7: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")

    @classmethod
    def from_config(cls, config: Config) -> "LossWeights":
        return cls(*config.loss_lambdas)


def total_objective(components, weights: LossWeights):
    """Weighted sum of the twelve loss components.

    `components` maps every name in REPORT_TERMS to a scalar (tensor or float);
    a missing component is an error naming it.
    """
    missing = [t for t in REPORT_TERMS if t not in components]
    if missing:
        raise ValueError(f"missing loss components: {', '.join(missing)}")
    c = components
    w = weights
    return (
        w.lambda1 * (c["adv"] + c["adv_r"])
        + w.lambda2 * (c["rec"] + c["rec_r"] + c["cyc"])
        + w.lambda3 * (c["seg"] + c["seg_r"])
        + w.lambda4 * (c["content"] + c["content_r"])
        + w.lambda5 * c["style"]
        + w.lambda6 * c["style_r"]
        + w.lambda7 * c["dist"]
    )


@dataclass(frozen=True)
class LossReport:
    """Per-step scalar loss values; `total` is the weighted objective."""

    rec: float
    rec_r: float
    cyc: float
    seg: float
    seg_r: float
    adv: float
    adv_r: float
    content: float
    content_r: float
    style: float
    style_r: float
    dist: float
    total: float

    @classmethod
    def from_components(cls, components, weights: LossWeights) -> "LossReport":
        values = {t: scalar(components[t]) for t in REPORT_TERMS}
        return cls(total=float(total_objective(values, weights)), **values)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term stops being finite; names the offending term."""
