"""Overfit the translator on a handful of images and report rec loss + PSNR.

Mirrors the translation acceptance run:

    python3 scripts/overfit_translation.py --images 8 --size 64 --steps 2000
"""

import argparse
import time

import numpy as np
import torch

from relight.config import desk_scale
from relight.images import psnr, single_from_tensor, to_tensor
from relight.synthetic import toy_corpus
from relight.trainer import build_trainer


def autoencode_psnr(trainer, corpus) -> float:
    vals = []
    with torch.no_grad():
        for image, _ in corpus:
            x = to_tensor([image])
            style = trainer.model.encode_style(x)
            out, _ = trainer.model.decode(trainer.model.encode_content(x), style)
            vals.append(psnr(single_from_tensor(out), image))
    return float(np.mean(vals))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--images", type=int, default=8)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--lr", type=float, default=3e-4)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--base-channels", type=int, default=48)
    parser.add_argument("--halving-period", type=int, default=400)
    parser.add_argument("--rec-target", type=float, default=0.05)
    parser.add_argument("--psnr-target", type=float, default=25.0)
    parser.add_argument("--check-every", type=int, default=100)
    args = parser.parse_args()

    cfg = desk_scale(lr=args.lr, batch_size=args.batch,
                     base_channels=args.base_channels,
                     lr_halving_period=args.halving_period)
    corpus = toy_corpus(7, args.images, size=args.size)
    trainer = build_trainer(cfg, seed=args.seed)
    t0 = time.time()
    while trainer.iteration < args.steps:
        chunk = min(args.check_every, args.steps - trainer.iteration)
        reports = trainer.fit(corpus, steps=chunk)
        rec = float(np.mean([r.rec for r in reports[-20:]]))
        p = autoencode_psnr(trainer, corpus)
        print(f"iteration {trainer.iteration}: rec={rec:.4f} psnr={p:.2f} dB"
              f"  ({time.time() - t0:.0f}s)", flush=True)
        if rec < args.rec_target and p >= args.psnr_target:
            print(f"targets met at iteration {trainer.iteration}")
            return
    print("targets NOT met")
    raise SystemExit(1)


if __name__ == "__main__":
    main()
