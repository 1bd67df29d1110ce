"""Training loop: symmetric pair flow, LSGAN updates, lr schedule, style pool."""

import math

import numpy as np
import torch

from .config import Config
from .images import to_tensor
from .losses import (
    LossReport,
    LossWeights,
    NonFiniteLossError,
    StylePool,
    content_l1,
    l1_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    scalar,
    segmentation_ce,
    style_distribution_loss,
    total_objective,
)
from .model import TranslationModel, build_model


def sample_prior_style(rng: torch.Generator, dim: int = 3,
                       batch: int | None = None) -> torch.Tensor:
    """Draw style codes from the unit normal prior."""
    if dim < 1:
        raise ValueError("style dimension must be positive")
    shape = (dim,) if batch is None else (batch, dim)
    return torch.randn(shape, generator=rng)


def pair_batch(batch) -> list:
    """Pair each batch item with its successor, wrapping around (i, (i+1) mod B)."""
    items = list(batch)
    if len(items) < 2:
        raise ValueError("need at least two items to form pairs")
    return [(items[i], items[(i + 1) % len(items)]) for i in range(len(items))]


def lr_at(iteration: int, initial_lr: float = 1e-4, halving_period: int = 200_000) -> float:
    """Learning rate halved every `halving_period` iterations."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    if initial_lr <= 0 or halving_period < 1:
        raise ValueError("bad schedule constants")
    return initial_lr * 0.5 ** (iteration // halving_period)


def format_log_line(iteration: int, lr: float, report: LossReport) -> str:
    parts = [f"iteration={iteration}", f"lr={lr:.8g}"]
    parts += [f"{k}={v:.6g}" for k, v in report.as_dict().items()]
    return " ".join(parts)


def _swap_halves(t: torch.Tensor) -> torch.Tensor:
    half = t.shape[0] // 2
    return torch.cat([t[half:], t[:half]], dim=0)


class Trainer:
    """Owns the model, optimizers, style pool, iteration counter, and RNG."""

    def __init__(self, model: TranslationModel, config: Config | None = None,
                 seed: int | None = None):
        self.model = model
        self.config = config or model.config
        self.weights = LossWeights.from_config(self.config)
        betas = (self.config.beta1, self.config.beta2)
        self.g_opt = torch.optim.Adam(list(model.generator_parameters()),
                                      lr=self.config.lr, betas=betas)
        self.d_opt = torch.optim.Adam(list(model.discriminator_parameters()),
                                      lr=self.config.lr, betas=betas)
        self.pool = StylePool(self.config.pool_size)
        self.rng = torch.Generator()
        self.rng.manual_seed(self.config.seed if seed is None else seed)
        self.iteration = 0
        # epoch sampling state for fit(); serialized with checkpoints
        self.epoch_order: list[int] = []
        self.epoch_pos = 0

    # -- data preparation ---------------------------------------------------

    def _stack_pairs(self, pairs):
        firsts = [p[0] for p in pairs]
        seconds = [p[1] for p in pairs]
        images = [item[0] for item in firsts + seconds]
        masks = [item[1] for item in firsts + seconds]
        x = to_tensor(images)
        m = torch.from_numpy(np.stack([np.asarray(mk) for mk in masks])).long()
        return x, m

    # -- the training step ---------------------------------------------------

    def training_step(self, pairs) -> LossReport:
        """One discriminator update followed by one generator/encoder update.

        `pairs` is a list of ((image, mask), (image', mask')) tuples; the flow
        runs symmetrically for both orderings of every pair.
        """
        if not pairs:
            raise ValueError("empty pair list")
        model = self.model
        w = self.weights
        half = len(pairs)

        lr = lr_at(self.iteration, self.config.lr, self.config.lr_halving_period)
        for opt in (self.g_opt, self.d_opt):
            for group in opt.param_groups:
                group["lr"] = lr

        x, m = self._stack_pairs(pairs)

        # encode everything once; partner codes are the swapped halves
        s_own = model.encode_style(x)
        s_partner = _swap_halves(s_own)
        c = model.encode_content(x)

        recon, _ = model.decode(c, s_own)
        translated, translated_logits = model.decode(c, s_partner)
        c_hat = model.encode_content(translated)
        s_hat = model.encode_style(translated)
        cycled, _ = model.decode(c_hat, _swap_halves(s_hat))

        s_rand = sample_prior_style(self.rng, self.config.style_dim, batch=x.shape[0])
        randomized, randomized_logits = model.decode(c, s_rand)
        c_hat_r = model.encode_content(randomized)
        s_hat_r = model.encode_style(randomized)
        recon_r, _ = model.decode(c_hat_r, s_hat_r)

        components = {
            "rec": l1_loss(recon, x),
            "rec_r": l1_loss(recon_r, randomized),
            "cyc": l1_loss(cycled, x),
            "seg": segmentation_ce(m, translated_logits),
            "seg_r": segmentation_ce(m, randomized_logits),
            "content": content_l1(c_hat, c),
            "content_r": content_l1(c_hat_r, c),
            "style": l1_loss(s_hat, s_partner),
            "style_r": l1_loss(s_hat_r, s_rand),
        }
        dist, self.pool = style_distribution_loss(self.pool, s_own[:half], s_own[half:])
        components["dist"] = dist

        # discriminator step on detached fakes; reals conditioned on detached styles
        translated_d = translated.detach()
        randomized_d = randomized.detach()
        s_own_d = s_own.detach()
        s_partner_d = s_partner.detach()
        self.d_opt.zero_grad(set_to_none=True)
        d_adv = (
            lsgan_d_loss(model.discriminate(x), model.discriminate(translated_d))
            + lsgan_d_loss(model.discriminate(x, s_own_d),
                           model.discriminate(translated_d, s_partner_d))
        )
        d_adv_r = (
            lsgan_d_loss(model.discriminate(x), model.discriminate(randomized_d))
            + lsgan_d_loss(model.discriminate(x, s_own_d),
                           model.discriminate(randomized_d, s_rand))
        )
        d_loss = w.lambda1 * (d_adv + d_adv_r)
        if not math.isfinite(scalar(d_loss)):
            raise NonFiniteLossError(
                f"discriminator adversarial loss is non-finite at iteration {self.iteration}")
        d_loss.backward()
        self.d_opt.step()

        # generator step against the updated discriminators, styles detached
        for p in model.discriminator_parameters():
            p.requires_grad_(False)
        try:
            components["adv"] = (
                lsgan_g_loss(model.discriminate(translated))
                + lsgan_g_loss(model.discriminate(translated, s_partner_d))
            )
            components["adv_r"] = (
                lsgan_g_loss(model.discriminate(randomized))
                + lsgan_g_loss(model.discriminate(randomized, s_rand))
            )
            for name, value in components.items():
                if not math.isfinite(scalar(value)):
                    raise NonFiniteLossError(
                        f"loss term '{name}' is non-finite at iteration {self.iteration}")
            total = total_objective(components, w)
            self.g_opt.zero_grad(set_to_none=True)
            total.backward()
            self.g_opt.step()
        finally:
            for p in model.discriminator_parameters():
                p.requires_grad_(True)

        self.iteration += 1
        return LossReport.from_components(components, w)

    # -- convenience loop ----------------------------------------------------

    def _next_indices(self, count: int, n_items: int) -> list[int]:
        if (not self.epoch_order or max(self.epoch_order) >= n_items
                or len(self.epoch_order) != n_items
                or self.epoch_pos + count > n_items):
            perm = torch.randperm(n_items, generator=self.rng)
            self.epoch_order = perm.tolist()
            self.epoch_pos = 0
        picked = self.epoch_order[self.epoch_pos:self.epoch_pos + count]
        self.epoch_pos += count
        return picked

    def fit(self, dataset, steps: int, log_every: int = 0, log_stream=None) -> list:
        """Run `steps` training steps over (image, mask) samples; returns the reports."""
        items = list(dataset)
        if len(items) < 2:
            raise ValueError("dataset must hold at least two samples")
        batch_size = min(self.config.batch_size, len(items))
        reports = []
        for _ in range(steps):
            batch = [items[i] for i in self._next_indices(batch_size, len(items))]
            report = self.training_step(pair_batch(batch))
            reports.append(report)
            if log_every and self.iteration % log_every == 0:
                line = format_log_line(self.iteration, lr_at(
                    self.iteration - 1, self.config.lr, self.config.lr_halving_period), report)
                if log_stream is None:
                    print(line)
                else:
                    log_stream.write(line + "\n")
        return reports


def build_trainer(config: Config, seed: int | None = None) -> Trainer:
    model = build_model(config, seed)
    return Trainer(model, config, seed)
