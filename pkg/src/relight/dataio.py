"""Disk I/O: images, segmentation masks, labels, datasets, balanced sampling."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .config import SEG_CLASS_NAMES

IGNORE_ID = -1

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def load_image(path, multiple: int = 16, policy: str = "crop") -> np.ndarray:
    """Read an 8-bit RGB (or grayscale) image into a [-1, 1] float array.

    Pixel value v maps linearly to v * 2/255 - 1. Grayscale images are
    replicated across channels. Dimensions are validated against `multiple`:
    policy 'crop' center-crops down to the nearest valid size, 'reject' raises.
    """
    if policy not in ("crop", "reject"):
        raise ValueError(f"unknown resize policy '{policy}'")
    with PILImage.open(path) as img:
        if img.mode in ("L", "RGB"):
            rgb = img.convert("RGB")
        elif img.mode == "P":
            rgb = img.convert("RGB")
        else:
            raise ValueError(f"unsupported image mode '{img.mode}' in {path}; need 8-bit RGB")
        arr = np.asarray(rgb, dtype=np.uint8)
    h, w = arr.shape[:2]
    th, tw = (h // multiple) * multiple, (w // multiple) * multiple
    if th < multiple or tw < multiple:
        raise ValueError(f"{path}: {h}x{w} is smaller than one multiple of {multiple}")
    if (th, tw) != (h, w):
        if policy == "reject":
            raise ValueError(f"{path}: {h}x{w} is not a multiple of {multiple}")
        top, left = (h - th) // 2, (w - tw) // 2
        arr = arr[top:top + th, left:left + tw]
    return arr.astype(np.float32) * (2.0 / 255.0) - 1.0


def save_image(image, path) -> None:
    """Quantize a [-1, 1] image to 8-bit and write it (format from the suffix)."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < -1.0 - 1e-4 or arr.max() > 1.0 + 1e-4:
        raise ValueError("image values outside [-1, 1]")
    quantized = np.clip(np.rint((arr + 1.0) * (255.0 / 2.0)), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(quantized, mode="RGB").save(path)


def load_mask_reduced(path, mapping: dict | None = None) -> np.ndarray:
    """Read an indexed-color (or grayscale) mask and reduce its ids to 9 classes.

    `mapping` sends source ids to a target class in [0, 9) or IGNORE_ID; ids
    observed in the file but absent from the mapping are an error listing them.
    Without a mapping, ids must already be valid target classes.
    """
    with PILImage.open(path) as img:
        if img.mode not in ("P", "L"):
            raise ValueError(f"unsupported mask mode '{img.mode}' in {path}; need indexed or grayscale")
        raw = np.asarray(img, dtype=np.int64)
    k = len(SEG_CLASS_NAMES)
    if mapping is None:
        mapping = {i: i for i in range(k)}
    bad_targets = [t for t in mapping.values() if t != IGNORE_ID and not 0 <= t < k]
    if bad_targets:
        raise ValueError(f"mapping targets out of range: {sorted(set(bad_targets))}")
    observed = np.unique(raw)
    unmapped = [int(v) for v in observed if int(v) not in mapping]
    if unmapped:
        raise ValueError(f"{path}: mask ids without a mapping: {unmapped}")
    lut = np.full(int(observed.max()) + 1, IGNORE_ID, dtype=np.int64)
    for src, dst in mapping.items():
        if 0 <= src < lut.size:
            lut[src] = dst
    return lut[raw]


def save_mask(mask, path) -> None:
    """Write an integer mask as an indexed PNG; IGNORE_ID stores as index 255."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got {arr.shape}")
    out = arr.astype(np.int64).copy()
    out[out == IGNORE_ID] = 255
    if out.min() < 0 or out.max() > 255:
        raise ValueError("mask ids must fit in a byte")
    img = PILImage.fromarray(out.astype(np.uint8), mode="P")
    palette = []
    for i in range(256):
        palette += [(37 * i) % 256, (97 * i) % 256, (17 * i) % 256]
    img.putpalette(palette)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path)


def load_labels(path) -> dict:
    """Parse a labels file: one `filename<TAB>class_id` row per line."""
    labels = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'filename<TAB>class_id'")
        name, raw = parts
        try:
            labels[name] = int(raw)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: class id '{raw}' is not an integer") from None
    return labels


def list_images(directory) -> list:
    root = Path(directory)
    if not root.is_dir():
        raise ValueError(f"not a directory: {directory}")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class DatasetSpec:
    """Where a dataset lives and how its masks/labels are interpreted."""

    images_dir: str
    masks_dir: str | None = None
    labels_file: str | None = None
    mask_mapping: dict | None = None
    multiple: int = 16
    resize_policy: str = "crop"
    extra: dict = field(default_factory=dict)


def _mask_path_for(image_path: Path, masks_dir: str) -> Path:
    candidate = Path(masks_dir) / (image_path.stem + ".png")
    if not candidate.exists():
        raise FileNotFoundError(f"no mask for {image_path.name} under {masks_dir}")
    return candidate


def _load_sample(spec: DatasetSpec, image_path: Path):
    image = load_image(image_path, spec.multiple, spec.resize_policy)
    mask = None
    if spec.masks_dir is not None:
        mask = load_mask_reduced(_mask_path_for(image_path, spec.masks_dir), spec.mask_mapping)
        if mask.shape != image.shape[:2]:
            # masks get the same center crop as their image
            mh, mw = mask.shape
            th, tw = image.shape[:2]
            if mh < th or mw < tw:
                raise ValueError(f"mask for {image_path.name} is smaller than the image")
            top, left = (mh - th) // 2, (mw - tw) // 2
            mask = mask[top:top + th, left:left + tw]
    return image, mask


def load_dataset(spec: DatasetSpec) -> list:
    """Eagerly load every (image, mask) sample; mask is None without a masks dir."""
    paths = list_images(spec.images_dir)
    if not paths:
        raise ValueError(f"no images under {spec.images_dir}")
    return [_load_sample(spec, p) for p in paths]


def balanced_iterator(spec: DatasetSpec, rng: np.random.Generator):
    """Yield (image, mask) samples with equal probability per class label.

    Draws a class uniformly among classes that have samples, then a member
    uniformly within it. Without a labels file, falls back to uniform sampling
    over all images and says so once on stdout.
    """
    paths = list_images(spec.images_dir)
    if not paths:
        raise ValueError(f"no images under {spec.images_dir}")
    groups: list[list[Path]]
    if spec.labels_file is None:
        print("balanced_iterator: no labels file, sampling uniformly")
        groups = [paths]
    else:
        labels = load_labels(spec.labels_file)
        by_class: dict[int, list[Path]] = {}
        for p in paths:
            if p.name not in labels:
                raise ValueError(f"no label for {p.name}")
            by_class.setdefault(labels[p.name], []).append(p)
        groups = [by_class[c] for c in sorted(by_class)]
    while True:
        group = groups[int(rng.integers(len(groups)))] if len(groups) > 1 else groups[0]
        path = group[int(rng.integers(len(group)))]
        yield _load_sample(spec, path)
