"""Image loading and the on-disk ink-mask convention.

Masks are 8-bit PNG with ink = 0 (black) and background = 255; when reading,
any value below 128 counts as ink.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError

# ITU-R 601-2 luma weights, rounded half-up to the nearest integer level.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

INK_VALUE = 0
BACKGROUND_VALUE = 255
INK_READ_CUTOFF = 128


def to_grayscale(arr: np.ndarray) -> np.ndarray:
    """Convert an (H, W) or (H, W, 3+) uint8 array to 8-bit grayscale."""
    if arr.ndim == 2:
        return arr.astype(np.uint8, copy=False)
    rgb = arr[..., :3].astype(np.float64)
    gray = rgb @ np.asarray(LUMA_WEIGHTS)
    return np.floor(gray + 0.5).clip(0, 255).astype(np.uint8)


def load_grayscale(path: str | Path) -> np.ndarray:
    """Load an image file as an (H, W) uint8 grayscale array."""
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        if im.mode not in ("RGB", "RGBA"):
            im = im.convert("RGB")
        return to_grayscale(np.asarray(im))


def save_grayscale(arr: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a boolean ink mask as 8-bit PNG (ink black, background white)."""
    out = np.where(mask, INK_VALUE, BACKGROUND_VALUE).astype(np.uint8)
    Image.fromarray(out, mode="L").save(path)


def load_mask(path: str | Path, expect_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Read an ink mask; raises if its shape differs from ``expect_shape``."""
    gray = load_grayscale(path)
    if expect_shape is not None and gray.shape != tuple(expect_shape):
        raise DimensionMismatchError(
            f"mask {path} has shape {gray.shape}, expected {tuple(expect_shape)}"
        )
    return gray < INK_READ_CUTOFF


def image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the file header without decoding pixel data."""
    with Image.open(path) as im:
        return im.size
