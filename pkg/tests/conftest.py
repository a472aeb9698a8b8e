"""Shared fixtures and synthetic ground-truth helpers."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image, ImageDraw


def text_page(size: int = 256, noise_sigma: float = 0.0, seed: int = 0, blur: float = 0.5):
    """Black glyph-like strokes on a white page, with exact ground truth.

    A slight acquisition blur makes the edges realistic; ground truth is the
    dark region of the rendered page before noise. Returns (image, truth).
    """
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    canvas = Image.new("L", (size, size), color=255)
    draw = ImageDraw.Draw(canvas)
    for y in range(16, size - 16, 26):
        for x in range(10, size - 20, 18):
            x0, y0 = x + int(rng.integers(-2, 3)), y + int(rng.integers(-2, 3))
            kind = rng.integers(0, 3)
            if kind == 0:
                draw.line([x0, y0, x0 + 9, y0 + 7], fill=0, width=5)
            elif kind == 1:
                draw.ellipse([x0, y0, x0 + 10, y0 + 10], outline=0, width=5)
            else:
                draw.line([x0, y0 + 8, x0 + 4, y0, x0 + 9, y0 + 8], fill=0, width=5)
    img = np.asarray(canvas, dtype=np.float64)
    if blur > 0:
        img = ndimage.gaussian_filter(img, blur)
    img = np.clip(np.rint(img), 0, 255)
    truth = img < 128
    if noise_sigma > 0:
        img = np.clip(np.rint(img + rng.normal(0.0, noise_sigma, img.shape)), 0, 255)
    return img.astype(np.uint8), truth


def f_measure(predicted: np.ndarray, truth: np.ndarray) -> float:
    tp = np.logical_and(predicted, truth).sum()
    if predicted.sum() == 0 or truth.sum() == 0 or tp == 0:
        return 0.0
    precision = tp / predicted.sum()
    recall = tp / truth.sum()
    return 2 * precision * recall / (precision + recall)


def blob_page(size: int = 256):
    """Dark and light discs on mid-gray ground; returns (image, dark centers, light centers)."""
    img = np.full((size, size), 150, dtype=np.uint8)
    yy, xx = np.mgrid[:size, :size]
    dark, light = [], []
    positions = [(48, 48), (48, 144), (144, 48), (144, 144), (208, 96), (96, 208)]
    for i, (cy, cx) in enumerate(positions):
        r = 7 + (i % 3) * 2
        spot = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        if i % 2 == 0:
            img[spot] = 30
            dark.append((cx, cy))
        else:
            img[spot] = 245
            light.append((cx, cy))
    return img, dark, light


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
