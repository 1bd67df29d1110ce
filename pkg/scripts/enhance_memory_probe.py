"""Measure peak RSS of piecewise enhancement vs direct full-res translation.

Run one mode per process so ru_maxrss reflects that mode alone:

    python3 scripts/enhance_memory_probe.py --mode piecewise --size 1024
    python3 scripts/enhance_memory_probe.py --mode direct --size 1024

Prints a single JSON line with the peak RSS in kilobytes.
"""

import argparse
import json
import resource
import time

import numpy as np
import torch

from relight.config import Config, desk_scale, load_config
from relight.enhancer import EnhancerState, enhance_full
from relight.images import single_from_tensor, to_tensor
from relight.model import build_model
from relight.synthetic import toy_image
from relight.trainer import sample_prior_style


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mode", required=True, choices=("piecewise", "direct"))
    parser.add_argument("--size", type=int, default=1024)
    parser.add_argument("--config", help="optional key = value config file")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = load_config(args.config) if args.config else desk_scale()
    model = build_model(cfg, seed=args.seed)
    hi = toy_image(np.random.default_rng(args.seed), args.size)
    style = sample_prior_style(torch.Generator().manual_seed(args.seed), cfg.style_dim)

    t0 = time.time()
    if args.mode == "piecewise":
        state = EnhancerState(cfg, seed=args.seed)
        out = enhance_full(hi, style.numpy(), model, state, cfg.enhance_mode)
    else:
        with torch.no_grad():
            out = single_from_tensor(
                model.translate_tensor(to_tensor([hi]), style.unsqueeze(0)))
    elapsed = time.time() - t0

    peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    print(json.dumps({
        "mode": args.mode,
        "size": args.size,
        "output_shape": list(out.shape),
        "peak_rss_kb": int(peak_kb),
        "elapsed_s": round(elapsed, 2),
    }))


if __name__ == "__main__":
    main()
