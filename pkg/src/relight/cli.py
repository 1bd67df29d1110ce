"""Command-line interface.

Subcommands: train, translate, enhance, timelapse, evaluate, decompose,
recompose, train-enhancer. Runs are deterministic given --seed.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from . import enhancer as enh
from .config import Config, ConfigError, load_config
from .dataio import DatasetSpec, load_dataset, load_image, save_image
from .features import make_feature_backend
from .inference import (
    TruncationSpec,
    extract_style,
    extract_style_fewshot,
    generate_timelapse,
    interpolate_style,
    translate,
    truncate_prior_style,
)
from .metrics import (
    conditional_inception_score,
    dipd,
    inception_score,
    make_classifier_backend,
    metric_record,
)
from .trainer import Trainer, build_trainer, sample_prior_style


def _add_common(p, checkpoint=False):
    p.add_argument("--config", help="key = value configuration file")
    if checkpoint:
        p.add_argument("--checkpoint", required=True, help="translator checkpoint")
    p.add_argument("--seed", type=int, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relight",
                                     description="label-free multi-domain image relighting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the translation model")
    _add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--labels")
    p.add_argument("--mask-mapping")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--resume")
    p.add_argument("--log-every", type=int, default=100)

    p = sub.add_parser("translate", help="re-render one image under another style")
    _add_common(p, checkpoint=True)
    p.add_argument("--content", required=True)
    style = p.add_mutually_exclusive_group(required=True)
    style.add_argument("--style-image")
    style.add_argument("--style-images", nargs="+")
    style.add_argument("--random", action="store_true")
    p.add_argument("--variance-scale", type=float)
    p.add_argument("--interp-alpha", type=float)
    p.add_argument("--no-truncation", action="store_true")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("enhance", help="piecewise translate and merge a hi-res image")
    _add_common(p, checkpoint=True)
    p.add_argument("--enhancer-checkpoint", required=True)
    p.add_argument("--input", required=True)
    style = p.add_mutually_exclusive_group(required=True)
    style.add_argument("--style-image")
    style.add_argument("--random", action="store_true")
    p.add_argument("--variance-scale", type=float)
    p.add_argument("--mode", choices=("strided", "bilinear"))
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("timelapse", help="one output frame per guidance frame")
    _add_common(p, checkpoint=True)
    p.add_argument("--content", required=True)
    p.add_argument("--guidance-dir", required=True)
    p.add_argument("--interp-alpha", type=float)
    p.add_argument("-o", "--output-dir", required=True)

    p = sub.add_parser("evaluate", help="compute a metric over image directories")
    _add_common(p)
    p.add_argument("--metric", required=True, choices=("dipd", "is", "cis"))
    p.add_argument("--images", help="image directory (is)")
    p.add_argument("--originals", help="source images (dipd)")
    p.add_argument("--translated", help="translated images (dipd)")
    p.add_argument("--groups", help="directory of per-content subdirectories (cis)")
    p.add_argument("--classifier", choices=("toy", "constant"))
    p.add_argument("--features", choices=("random-conv",))

    p = sub.add_parser("decompose", help="split an image into 16 shifted pieces")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("strided", "bilinear"), default="strided")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("recompose", help="exactly reassemble strided pieces")
    p.add_argument("--pieces", required=True, help="directory written by decompose")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-enhancer", help="train the merging network")
    _add_common(p, checkpoint=True)
    p.add_argument("--images", required=True, help="hi-res image directory")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--log-every", type=int, default=100)

    return parser


def _resolve_config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    if getattr(args, "seed", None) is not None:
        cfg = Config(**{**cfg.__dict__, "seed": args.seed})
    return cfg


def _load_translator(path) -> Trainer:
    state = ckpt.load_checkpoint(path)
    if not isinstance(state, Trainer):
        raise ConfigError(f"{path} is not a translator checkpoint")
    return state


def _load_enhancer(path) -> enh.EnhancerState:
    state = ckpt.load_checkpoint(path)
    if not isinstance(state, enh.EnhancerState):
        raise ConfigError(f"{path} is not an enhancer checkpoint")
    return state


def _parse_mask_mapping(path) -> dict:
    mapping = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'source target'")
        src = int(parts[0])
        mapping[src] = -1 if parts[1] == "ignore" else int(parts[1])
    return mapping


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if args.resume:
        trainer = _load_translator(args.resume)
    else:
        trainer = build_trainer(cfg)
    mapping = _parse_mask_mapping(args.mask_mapping) if args.mask_mapping else None
    spec = DatasetSpec(images_dir=args.images, masks_dir=args.masks,
                       labels_file=args.labels, mask_mapping=mapping,
                       multiple=16, resize_policy=trainer.config.resize_policy)
    dataset = load_dataset(spec)
    if any(mask is None for _, mask in dataset):
        raise ConfigError("training needs a mask per image")
    trainer.fit(dataset, args.steps, log_every=args.log_every, log_stream=sys.stdout)
    ckpt.save_checkpoint(trainer, args.out)
    print(f"saved checkpoint to {args.out} at iteration {trainer.iteration}")
    return 0


def _style_from_args(args, trainer: Trainer, content_image) -> np.ndarray:
    cfg = trainer.config
    model = trainer.model
    variance_scale = args.variance_scale if args.variance_scale is not None else cfg.variance_scale
    interp_alpha = getattr(args, "interp_alpha", None)
    if interp_alpha is None:
        interp_alpha = cfg.interp_alpha
    spec = TruncationSpec(variance_scale=variance_scale, interp_alpha=interp_alpha)

    if getattr(args, "random", False):
        rng = torch.Generator().manual_seed(cfg.seed)
        style = sample_prior_style(rng, cfg.style_dim).numpy()
        return truncate_prior_style(style, spec)

    if getattr(args, "style_images", None):
        style = extract_style_fewshot(model, [
            load_image(p, 16, cfg.resize_policy) for p in args.style_images])
    else:
        style = extract_style(model, load_image(args.style_image, 16, cfg.resize_policy))
    if getattr(args, "no_truncation", False) or content_image is None:
        return style
    own = extract_style(model, content_image)
    return interpolate_style(own, style, spec.interp_alpha)


def _cmd_translate(args) -> int:
    trainer = _load_translator(args.checkpoint)
    if args.seed is not None:
        trainer.config.seed = args.seed
    content = load_image(args.content, 16, trainer.config.resize_policy)
    style = _style_from_args(args, trainer, content)
    out = translate(trainer.model, content, style)
    save_image(out, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_enhance(args) -> int:
    trainer = _load_translator(args.checkpoint)
    if args.seed is not None:
        trainer.config.seed = args.seed
    state = _load_enhancer(args.enhancer_checkpoint)
    mode = args.mode or trainer.config.enhance_mode
    hi = load_image(args.input, 64, trainer.config.resize_policy)
    args.no_truncation = True  # enhance styles are used as given
    style = _style_from_args(args, trainer, None)
    out = enh.enhance_full(hi, style, trainer.model, state, mode)
    save_image(out, args.output)
    print(f"wrote {args.output} ({out.shape[0]}x{out.shape[1]})")
    return 0


def _cmd_timelapse(args) -> int:
    trainer = _load_translator(args.checkpoint)
    cfg = trainer.config
    content = load_image(args.content, 16, cfg.resize_policy)
    frames_dir = Path(args.guidance_dir)
    frame_paths = sorted(p for p in frames_dir.iterdir()
                         if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not frame_paths:
        raise ConfigError(f"no guidance frames under {args.guidance_dir}")
    guidance = [load_image(p, 16, cfg.resize_policy) for p in frame_paths]
    alpha = args.interp_alpha if args.interp_alpha is not None else cfg.interp_alpha
    spec = TruncationSpec(variance_scale=cfg.variance_scale, interp_alpha=alpha)
    frames = generate_timelapse(trainer.model, content, guidance, spec)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        save_image(frame, out_dir / f"frame_{i:04d}.png")
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


def _iter_images(directory, multiple=1):
    root = Path(directory)
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not paths:
        raise ConfigError(f"no images under {directory}")
    return [load_image(p, multiple, "crop") for p in paths], paths


def _cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    classifier_name = args.classifier or cfg.classifier_backend
    features_name = args.features or cfg.feature_backend
    if args.metric == "is":
        if not args.images:
            raise ConfigError("evaluate --metric is needs --images")
        images, _ = _iter_images(args.images)
        backend = make_classifier_backend(classifier_name, cfg.seed)
        record = metric_record("is", inception_score(images, backend), len(images),
                               classifier_name)
    elif args.metric == "cis":
        if not args.groups:
            raise ConfigError("evaluate --metric cis needs --groups")
        group_dirs = sorted(p for p in Path(args.groups).iterdir() if p.is_dir())
        if not group_dirs:
            raise ConfigError(f"no group subdirectories under {args.groups}")
        groups = [_iter_images(d)[0] for d in group_dirs]
        backend = make_classifier_backend(classifier_name, cfg.seed)
        count = sum(len(g) for g in groups)
        record = metric_record("cis", conditional_inception_score(groups, backend),
                               count, classifier_name)
    else:
        if not args.originals or not args.translated:
            raise ConfigError("evaluate --metric dipd needs --originals and --translated")
        originals, opaths = _iter_images(args.originals)
        translated_dir = Path(args.translated)
        backend = make_feature_backend(features_name, cfg.seed)
        values = []
        for orig, path in zip(originals, opaths):
            counterpart = translated_dir / path.name
            if not counterpart.exists():
                raise ConfigError(f"no translated counterpart for {path.name}")
            values.append(dipd(orig, load_image(counterpart, 1, "crop"), backend))
        record = metric_record("dipd", float(np.mean(values)), len(values), features_name)
    print(json.dumps(record))
    return 0


def _cmd_decompose(args) -> int:
    hi = load_image(args.input, 4, "reject")
    stack = enh.decompose_shifts(hi, args.mode)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for piece, (dy, dx) in zip(stack.pieces, stack.shifts):
        name = f"piece_{dy}{dx}.png"
        save_image(np.clip(piece, -1.0, 1.0), out_dir / name)
        files.append(name)
    manifest = {"mode": stack.mode, "shifts": [list(s) for s in stack.shifts], "files": files}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote 16 pieces to {out_dir}")
    return 0


def _cmd_recompose(args) -> int:
    pieces_dir = Path(args.pieces)
    manifest_path = pieces_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json under {args.pieces}")
    manifest = json.loads(manifest_path.read_text())
    shifts = tuple(tuple(s) for s in manifest["shifts"])
    pieces = np.stack([load_image(pieces_dir / name, 1, "crop") for name in manifest["files"]])
    stack = enh.ShiftStack(pieces, manifest["mode"], shifts)
    out = enh.recompose_strided(stack)
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_train_enhancer(args) -> int:
    trainer = _load_translator(args.checkpoint)
    cfg = load_config(args.config) if args.config else trainer.config
    if args.seed is not None:
        cfg = Config(**{**cfg.__dict__, "seed": args.seed})
    images, _ = _iter_images(args.images, multiple=64)
    state = enh.EnhancerState(cfg)
    rng = torch.Generator().manual_seed(cfg.seed)
    paired, unpaired = enh.build_enhancer_dataset(images, trainer.model, rng, cfg.enhance_mode)
    samples = paired + unpaired
    order_rng = torch.Generator().manual_seed(cfg.seed + 1)
    batch_size = max(1, args.batch)
    for step in range(args.steps):
        idx = torch.randint(len(samples), (batch_size,), generator=order_rng).tolist()
        losses = state.training_step([samples[i] for i in idx])
        if args.log_every and (step + 1) % args.log_every == 0:
            line = " ".join([f"iteration={state.iteration}"]
                            + [f"{k}={v:.6g}" for k, v in losses.items()])
            print(line)
    ckpt.save_checkpoint(state, args.out)
    print(f"saved enhancer checkpoint to {args.out} at iteration {state.iteration}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "translate": _cmd_translate,
    "enhance": _cmd_enhance,
    "timelapse": _cmd_timelapse,
    "evaluate": _cmd_evaluate,
    "decompose": _cmd_decompose,
    "recompose": _cmd_recompose,
    "train-enhancer": _cmd_train_enhancer,
}


def cli_dispatch(argv) -> int:
    """Parse argv (no program name) and run the command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
