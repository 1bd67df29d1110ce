"""Overfit the merging network on autoencoder-mode pairs and report PSNR.

Pairs put the decomposition of each hi-res image against the image itself,
the limit case of a style-preserving translation:

    python3 scripts/overfit_enhancer.py --pairs 16 --size 256 --steps 5000
"""

import argparse
import time

import numpy as np
import torch

from relight.config import desk_scale
from relight.enhancer import EnhancerState, decompose_shifts, merge
from relight.images import psnr
from relight.synthetic import toy_image


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=16)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--psnr-target", type=float, default=30.0)
    parser.add_argument("--check-every", type=int, default=50)
    args = parser.parse_args()

    cfg = desk_scale(enh_lr=args.lr)
    rng = np.random.default_rng(21)
    targets = [toy_image(rng, args.size) for _ in range(args.pairs)]
    paired = [(decompose_shifts(hi, cfg.enhance_mode), hi) for hi in targets]
    state = EnhancerState(cfg, seed=args.seed)
    order = torch.Generator().manual_seed(1)
    t0 = time.time()
    for step in range(1, args.steps + 1):
        i = int(torch.randint(len(paired), (1,), generator=order))
        state.training_step([paired[i]])
        if step % args.check_every == 0:
            p = float(np.mean([psnr(merge(stack, state), hi) for stack, hi in paired]))
            print(f"step {step}: psnr={p:.2f} dB  ({time.time() - t0:.0f}s)", flush=True)
            if p >= args.psnr_target:
                print(f"target met at step {step}")
                return
    print("target NOT met")
    raise SystemExit(1)


if __name__ == "__main__":
    main()
