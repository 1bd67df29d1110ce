"""Image array helpers.

An image is a float32 numpy array of shape (H, W, 3) with values in [-1, 1].
Networks operate on NCHW torch tensors; these helpers convert at the boundary.
"""

import math

import numpy as np
import torch


def as_image(array) -> np.ndarray:
    """Validate and coerce an array to the (H, W, 3) float32 image layout."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


def to_tensor(images, dtype=torch.float32) -> torch.Tensor:
    """Stack one image or a sequence of same-sized images into a (B, 3, H, W) tensor."""
    if isinstance(images, np.ndarray) and images.ndim == 3:
        images = [images]
    arrs = [as_image(im) for im in images]
    batch = np.stack(arrs)
    return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous().to(dtype)


def from_tensor(tensor: torch.Tensor) -> list[np.ndarray]:
    """Convert a (B, 3, H, W) tensor back to a list of (H, W, 3) float32 arrays."""
    if tensor.dim() == 3:
        tensor = tensor.unsqueeze(0)
    out = tensor.detach().to(torch.float32).permute(0, 2, 3, 1).cpu().numpy()
    return [np.ascontiguousarray(out[i]) for i in range(out.shape[0])]


def single_from_tensor(tensor: torch.Tensor) -> np.ndarray:
    images = from_tensor(tensor)
    if len(images) != 1:
        raise ValueError(f"expected a single image, got batch of {len(images)}")
    return images[0]


def psnr(a, b, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB. Default peak 2.0 matches the [-1, 1] range."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
