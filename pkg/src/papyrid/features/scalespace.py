"""Gaussian scale-space pyramid and difference-of-Gaussians stacks.

The difference at level i is gaussians[i] - gaussians[i + 1], so dark blobs
on a light ground show up as negative minima. This sign convention is what
lets the detector restrict keypoints to ink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..errors import ImageTooSmallError

MIN_BASE_SIZE = 16


@dataclass(frozen=True)
class ScaleSpaceParams:
    scales_per_octave: int = 3
    sigma0: float = 1.6
    contrast_threshold: float = 0.04
    edge_threshold: float = 10.0
    downsample_factor: int = 2
    assumed_blur: float = 0.5
    upright: bool = False
    border: int = 5  # detection margin in px at each octave

    def __post_init__(self):
        if self.scales_per_octave < 1:
            raise ValueError("scales_per_octave must be >= 1")
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")


@dataclass
class Octave:
    index: int
    gaussians: np.ndarray  # (s + 3, H, W) float64
    dogs: np.ndarray  # (s + 2, H, W) float64


@dataclass
class ScaleSpace:
    params: ScaleSpaceParams
    original_shape: tuple[int, int]
    base_shape: tuple[int, int]
    octaves: list[Octave] = field(default_factory=list)

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.params.scales_per_octave)

    def sigma_at(self, octave: int, level: float) -> float:
        """Octave-relative blur at a (possibly fractional) level index."""
        return self.params.sigma0 * (self.k**level)

    def to_original(self, octave: int, x: float, y: float) -> tuple[float, float]:
        """Map octave coordinates to original-image pixel coordinates."""
        ds = self.params.downsample_factor
        scale = float(2**octave)
        half = (ds - 1) / 2.0
        return ds * x * scale + half, ds * y * scale + half


def downsample_area(image: np.ndarray, factor: int) -> np.ndarray:
    """Area-average downsampling; trailing rows/cols that do not fill a block are dropped."""
    if factor == 1:
        return np.asarray(image, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    h = (img.shape[0] // factor) * factor
    w = (img.shape[1] // factor) * factor
    img = img[:h, :w]
    return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def num_octaves(shape: tuple[int, int]) -> int:
    """Octave count keeping the smallest level at least MIN_BASE_SIZE wide."""
    side = min(shape)
    return max(1, int(math.floor(math.log2(side / MIN_BASE_SIZE))) + 1)


def build_scale_space(image: np.ndarray, params: ScaleSpaceParams = ScaleSpaceParams()) -> ScaleSpace:
    """Downsample, then build Gaussian and DoG stacks per octave."""
    raw = np.asarray(image)
    img = raw.astype(np.float64)
    if raw.dtype.kind in "iu":
        img = img / 255.0
    original_shape = raw.shape
    base = downsample_area(img, params.downsample_factor)
    if min(base.shape) < MIN_BASE_SIZE:
        raise ImageTooSmallError(
            f"image {original_shape} is below {MIN_BASE_SIZE}px after downsampling by {params.downsample_factor}"
        )

    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    space = ScaleSpace(params=params, original_shape=tuple(original_shape), base_shape=base.shape)

    # Blur increments between consecutive levels within an octave.
    deltas = [params.sigma0 * (k ** (i - 1)) * math.sqrt(k * k - 1.0) for i in range(1, s + 3)]
    first_delta = math.sqrt(max(params.sigma0**2 - params.assumed_blur**2, 0.01))

    current = base
    for o in range(num_octaves(base.shape)):
        levels = np.empty((s + 3,) + current.shape, dtype=np.float64)
        if o == 0:
            levels[0] = ndimage.gaussian_filter(current, first_delta, mode="nearest")
        else:
            levels[0] = current
        for i, delta in enumerate(deltas, start=1):
            levels[i] = ndimage.gaussian_filter(levels[i - 1], delta, mode="nearest")
        dogs = levels[:-1] - levels[1:]
        space.octaves.append(Octave(index=o, gaussians=levels, dogs=dogs))
        current = levels[s][::2, ::2]
        if min(current.shape) < MIN_BASE_SIZE:
            break
    return space
