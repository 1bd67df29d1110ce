"""Checkpoint archives.

A checkpoint is a single .npz (zip) archive: every parameter keyed by module
path, optimizer moments, the style pool, RNG state, and a JSON metadata entry
(kind tag, format version, iteration, latent sizes, full config). Loading a
corrupt or truncated archive raises CheckpointError; saves are atomic
(temp file + rename) so no partial archive is ever left behind.
"""

import dataclasses
import json
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import torch

from .config import Config

FORMAT_VERSION = 1

KIND_TRANSLATOR = "translator"
KIND_ENHANCER = "enhancer"


class CheckpointError(RuntimeError):
    pass


def _state_dict_arrays(module: torch.nn.Module, prefix: str) -> dict:
    out = {}
    for key, tensor in module.state_dict().items():
        out[f"{prefix}/{key}"] = tensor.detach().cpu().numpy()
    return out


def _load_state_dict(module: torch.nn.Module, archive, prefix: str) -> None:
    state = {}
    wanted = module.state_dict()
    for key, tensor in wanted.items():
        name = f"{prefix}/{key}"
        if name not in archive:
            raise CheckpointError(f"archive is missing parameter '{name}'")
        arr = archive[name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"parameter '{name}' has shape {arr.shape}, expected {tuple(tensor.shape)}")
        state[key] = torch.from_numpy(arr.copy()).to(tensor.dtype)
    module.load_state_dict(state)


def _optimizer_arrays(opt: torch.optim.Optimizer, prefix: str) -> dict:
    out = {}
    sd = opt.state_dict()
    for idx, entry in sd["state"].items():
        for field, value in entry.items():
            tensor = value if isinstance(value, torch.Tensor) else torch.tensor(float(value))
            out[f"{prefix}/{idx}/{field}"] = tensor.detach().cpu().numpy()
    return out


def _load_optimizer(opt: torch.optim.Optimizer, archive, prefix: str) -> None:
    sd = opt.state_dict()
    n_params = sum(len(g["params"]) for g in sd["param_groups"])
    state = {}
    lead = f"{prefix}/"
    grouped: dict[int, dict] = {}
    for name in archive.files:
        if not name.startswith(lead):
            continue
        _, idx, field = name.rsplit("/", 2)
        grouped.setdefault(int(idx), {})[field] = archive[name]
    for idx, entry in grouped.items():
        if idx >= n_params:
            raise CheckpointError(f"optimizer entry index {idx} out of range")
        state[idx] = {field: torch.from_numpy(arr.copy()) for field, arr in entry.items()}
    sd["state"] = state
    opt.load_state_dict(sd)


def _rng_array(rng: torch.Generator) -> np.ndarray:
    return rng.get_state().numpy()


def _write_archive(path, arrays: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez_compressed(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_archive(path):
    try:
        archive = np.load(path, allow_pickle=False)
        _ = archive.files  # force the zip directory to be read
        return archive
    except FileNotFoundError:
        raise
    except (zipfile.BadZipFile, ValueError, OSError, EOFError) as exc:
        raise CheckpointError(f"cannot read checkpoint '{path}': {exc}") from exc


def _meta_from(archive) -> dict:
    if "meta" not in archive.files:
        raise CheckpointError("archive has no metadata entry")
    try:
        meta = json.loads(bytes(archive["meta"].tobytes()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"metadata entry is unreadable: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    return meta


def _meta_array(meta: dict) -> np.ndarray:
    return np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8).copy()


def save_checkpoint(state, path) -> None:
    """Write a Trainer or EnhancerState to a single archive."""
    from .enhancer import EnhancerState
    from .trainer import Trainer

    if isinstance(state, Trainer):
        _save_trainer(state, path)
    elif isinstance(state, EnhancerState):
        _save_enhancer(state, path)
    else:
        raise TypeError(f"cannot checkpoint object of type {type(state).__name__}")


def load_checkpoint(path):
    """Load a checkpoint archive, returning a Trainer or EnhancerState by kind tag."""
    archive = _read_archive(path)
    meta = _meta_from(archive)
    kind = meta.get("kind")
    if kind == KIND_TRANSLATOR:
        return _load_trainer(archive, meta)
    if kind == KIND_ENHANCER:
        return _load_enhancer(archive, meta)
    raise CheckpointError(f"unknown checkpoint kind '{kind}'")


def _save_trainer(trainer, path) -> None:
    cfg = trainer.config
    meta = {
        "kind": KIND_TRANSLATOR,
        "format_version": FORMAT_VERSION,
        "iteration": trainer.iteration,
        "style_dim": cfg.style_dim,
        "class_count": cfg.class_count,
        "content_channels": cfg.content_channels,
        "config": dataclasses.asdict(cfg),
        "epoch_pos": trainer.epoch_pos,
    }
    arrays = {"meta": _meta_array(meta)}
    arrays.update(_state_dict_arrays(trainer.model, "model"))
    arrays.update(_optimizer_arrays(trainer.g_opt, "opt_g"))
    arrays.update(_optimizer_arrays(trainer.d_opt, "opt_d"))
    pool = trainer.pool.as_matrix()
    arrays["pool"] = (pool.numpy() if pool is not None
                      else np.zeros((0, cfg.style_dim), dtype=np.float32))
    arrays["rng"] = _rng_array(trainer.rng)
    arrays["epoch_order"] = np.asarray(trainer.epoch_order, dtype=np.int64)
    _write_archive(path, arrays)


def _load_trainer(archive, meta):
    from .trainer import Trainer
    from .model import TranslationModel

    try:
        cfg = Config(**meta["config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"metadata config is invalid: {exc}") from exc
    with torch.random.fork_rng():
        torch.manual_seed(0)
        model = TranslationModel(cfg)
    trainer = Trainer(model, cfg)
    _load_state_dict(model, archive, "model")
    _load_optimizer(trainer.g_opt, archive, "opt_g")
    _load_optimizer(trainer.d_opt, archive, "opt_d")
    pool_arr = archive["pool"]
    if pool_arr.size:
        trainer.pool.extend_detached(torch.from_numpy(pool_arr.copy()))
    trainer.rng.set_state(torch.from_numpy(archive["rng"].copy()))
    trainer.iteration = int(meta["iteration"])
    trainer.epoch_order = [int(i) for i in archive["epoch_order"]]
    trainer.epoch_pos = int(meta.get("epoch_pos", 0))
    return trainer


def _save_enhancer(state, path) -> None:
    cfg = state.config
    meta = {
        "kind": KIND_ENHANCER,
        "format_version": FORMAT_VERSION,
        "iteration": state.iteration,
        "style_dim": cfg.style_dim,
        "class_count": cfg.class_count,
        "content_channels": cfg.content_channels,
        "config": dataclasses.asdict(cfg),
    }
    arrays = {"meta": _meta_array(meta)}
    arrays.update(_state_dict_arrays(state.network, "network"))
    arrays.update(_state_dict_arrays(state.discriminator, "discriminator"))
    # the perceptual extractor is frozen but seed-dependent; its weights are
    # part of the training state, not recoverable from the config alone
    arrays.update(_state_dict_arrays(state.perceptual, "perceptual"))
    arrays.update(_optimizer_arrays(state.g_opt, "opt_g"))
    arrays.update(_optimizer_arrays(state.d_opt, "opt_d"))
    _write_archive(path, arrays)


def _load_enhancer(archive, meta):
    from .enhancer import EnhancerState

    try:
        cfg = Config(**meta["config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"metadata config is invalid: {exc}") from exc
    state = EnhancerState(cfg)
    _load_state_dict(state.network, archive, "network")
    _load_state_dict(state.discriminator, archive, "discriminator")
    _load_state_dict(state.perceptual, archive, "perceptual")
    _load_optimizer(state.g_opt, archive, "opt_g")
    _load_optimizer(state.d_opt, archive, "opt_d")
    state.iteration = int(meta["iteration"])
    return state
