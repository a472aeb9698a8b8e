"""Ink segmentation: Otsu, Sauvola, the local-contrast method of Su, external masks.

All methods return a boolean (H, W) mask with True marking ink. Window
statistics are computed over the window clipped at image borders, via
integral images.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imageio
from .errors import DimensionMismatchError, EmptyHistogramError, UnknownMethodError

METHODS = ("otsu", "sauvola", "su", "external")


@dataclass(frozen=True)
class SuParams:
    contrast_eps: float = 1e-8
    window: int = 9
    min_high_contrast: int = 9

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.min_high_contrast < 1:
            raise ValueError("min_high_contrast must be >= 1")
        if self.contrast_eps <= 0:
            raise ValueError("contrast_eps must be positive")


@dataclass(frozen=True)
class SauvolaParams:
    window: int = 31
    k: float = 0.2
    r: float = 128.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")


def window_sums(arr: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel sum over a centered window x window box, clipped at borders."""
    a = np.asarray(arr, dtype=np.float64)
    h, w = a.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=ii[1:, 1:])
    r = window // 2
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    return ii[np.ix_(y1, x1)] - ii[np.ix_(y0, x1)] - ii[np.ix_(y1, x0)] + ii[np.ix_(y0, x0)]


def window_counts(shape: tuple[int, int], window: int) -> np.ndarray:
    """Number of in-image pixels of the centered window at every position."""
    h, w = shape
    r = window // 2
    ny = np.clip(np.arange(h) + r + 1, 0, h) - np.clip(np.arange(h) - r, 0, h)
    nx = np.clip(np.arange(w) + r + 1, 0, w) - np.clip(np.arange(w) - r, 0, w)
    return np.outer(ny, nx).astype(np.float64)


def otsu_threshold(histogram: np.ndarray) -> int:
    """Threshold maximizing between-class variance of the split {<=t, >t}.

    Ties break toward the smallest t. A single-mode histogram is degenerate:
    the mode itself is returned with a warning.
    """
    h = np.asarray(histogram, dtype=np.float64)
    if h.ndim != 1 or h.size != 256:
        raise EmptyHistogramError(f"expected a 256-bin histogram, got shape {h.shape}")
    nonzero = np.flatnonzero(h)
    if nonzero.size == 0:
        raise EmptyHistogramError("histogram has no counts")
    if nonzero.size == 1:
        warnings.warn("single-mode histogram; returning the mode as threshold", stacklevel=2)
        return int(nonzero[0])

    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(h)
    total = w0[-1]
    m0 = np.cumsum(h * levels)
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.divide(m0, w0, out=np.zeros(256), where=w0 > 0)
    mu1 = np.divide(m0[-1] - m0, w1, out=np.zeros(256), where=w1 > 0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    return int(np.argmax(between))


def intensity_histogram(image: np.ndarray) -> np.ndarray:
    return np.bincount(np.asarray(image, dtype=np.uint8).ravel(), minlength=256)


def su_contrast(image: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Local-contrast map (max-min)/(max+min+eps) over 3x3 neighborhoods.

    Neighborhoods are clipped at image borders; a constant neighborhood
    yields 0 and the map lies in [0, 1].
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    img = np.asarray(image, dtype=np.float64)
    mx = ndimage.maximum_filter(img, size=3, mode="nearest")
    mn = ndimage.minimum_filter(img, size=3, mode="nearest")
    return (mx - mn) / (mx + mn + eps)


@dataclass
class SuMaps:
    """Intermediate maps of the Su decision rule, exposed for inspection."""

    contrast: np.ndarray
    contrast_threshold: int
    high_contrast: np.ndarray  # bool set E
    window_count: np.ndarray  # high-contrast pixels per window
    local_threshold: np.ndarray  # mean_E + std_E / 2, NaN where the window has no E pixels


def su_maps(image: np.ndarray, params: SuParams = SuParams()) -> SuMaps:
    img = np.asarray(image, dtype=np.float64)
    contrast = su_contrast(img, params.contrast_eps)
    quantized = np.floor(contrast * 255.0 + 0.5).astype(np.uint8)
    t = otsu_threshold(np.bincount(quantized.ravel(), minlength=256))
    high = quantized > t

    ne = window_sums(high.astype(np.float64), params.window)
    sum_e = window_sums(img * high, params.window)
    sum_e2 = window_sums(img * img * high, params.window)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_e = sum_e / ne
        var_e = np.maximum(sum_e2 / ne - mean_e**2, 0.0)
        local_t = mean_e + np.sqrt(var_e) / 2.0
    return SuMaps(
        contrast=contrast,
        contrast_threshold=t,
        high_contrast=high,
        window_count=ne,
        local_threshold=local_t,
    )


def su_binarize(image: np.ndarray, params: SuParams = SuParams()) -> np.ndarray:
    """Su's rule: enough high-contrast pixels nearby and darker than their stats."""
    img = np.asarray(image, dtype=np.float64)
    maps = su_maps(img, params)
    enough = maps.window_count >= params.min_high_contrast
    with np.errstate(invalid="ignore"):
        dark = img <= maps.local_threshold
    return enough & dark


def sauvola(image: np.ndarray, params: SauvolaParams = SauvolaParams()) -> np.ndarray:
    """Sauvola threshold t = mean * (1 + k * (std / R - 1)); ink where I <= t."""
    img = np.asarray(image, dtype=np.float64)
    counts = window_counts(img.shape, params.window)
    mean = window_sums(img, params.window) / counts
    var = np.maximum(window_sums(img * img, params.window) / counts - mean**2, 0.0)
    std = np.sqrt(var)
    threshold = mean * (1.0 + params.k * (std / params.r - 1.0))
    return img <= threshold


def otsu_binarize(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.uint8)
    t = otsu_threshold(intensity_histogram(img))
    return img <= t


def binarize(
    image: np.ndarray,
    method: str,
    *,
    su: SuParams | None = None,
    sauvola_params: SauvolaParams | None = None,
    mask_path: str | Path | None = None,
) -> np.ndarray:
    """Dispatch to one binarization method; external reads a mask file."""
    if method == "otsu":
        return otsu_binarize(image)
    if method == "sauvola":
        return sauvola(image, sauvola_params or SauvolaParams())
    if method == "su":
        return su_binarize(image, su or SuParams())
    if method == "external":
        if mask_path is None:
            raise DimensionMismatchError("external method requires a mask file")
        return imageio.load_mask(mask_path, expect_shape=np.asarray(image).shape)
    raise UnknownMethodError(f"unknown binarization method {method!r}; expected one of {METHODS}")
