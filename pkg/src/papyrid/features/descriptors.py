"""128-D gradient-histogram descriptors (4x4 spatial cells x 8 orientation bins).

Histograms use trilinear interpolation, Gaussian spatial weighting, a 0.2
clip and final unit normalization. Gradient-free patches produce zero
vectors and are dropped together with their keypoints.
"""

from __future__ import annotations

import math

import numpy as np

from .keypoints import Keypoint
from .scalespace import ScaleSpace

DESCRIPTOR_WIDTH = 4  # spatial cells per side
DESCRIPTOR_BINS = 8  # orientation bins per cell
DESCRIPTOR_DIM = DESCRIPTOR_WIDTH * DESCRIPTOR_WIDTH * DESCRIPTOR_BINS
_SCALE_MULTIPLIER = 3.0  # cell width in units of keypoint scale
_MAGNITUDE_CLIP = 0.2
_NORM_FLOOR = 1e-12


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference magnitude and angle maps; borders are zero."""
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gy[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % (2 * math.pi)
    return mag, ang


def _descriptor_at(
    mag: np.ndarray,
    ang: np.ndarray,
    x: float,
    y: float,
    sigma: float,
    orientation: float,
) -> np.ndarray:
    h, w = mag.shape
    d, nbins = DESCRIPTOR_WIDTH, DESCRIPTOR_BINS
    hist_width = _SCALE_MULTIPLIER * sigma
    radius = int(round(hist_width * math.sqrt(2) * (d + 1) * 0.5))
    radius = min(radius, int(math.hypot(h, w)))

    cx, cy = int(round(x)), int(round(y))
    y0, y1 = max(cy - radius, 0), min(cy + radius + 1, h)
    x0, x1 = max(cx - radius, 0), min(cx + radius + 1, w)
    if y1 <= y0 or x1 <= x0:
        return np.zeros(DESCRIPTOR_DIM)

    yy, xx = np.mgrid[y0:y1, x0:x1]
    dy = (yy - y).ravel()
    dx = (xx - x).ravel()
    cos_t, sin_t = math.cos(orientation), math.sin(orientation)
    # Rotate offsets into the keypoint frame.
    x_rot = (cos_t * dx + sin_t * dy) / hist_width
    y_rot = (-sin_t * dx + cos_t * dy) / hist_width
    rbin = y_rot + 0.5 * d - 0.5
    cbin = x_rot + 0.5 * d - 0.5

    inside = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    if not np.any(inside):
        return np.zeros(DESCRIPTOR_DIM)
    rbin, cbin = rbin[inside], cbin[inside]
    m = mag[y0:y1, x0:x1].ravel()[inside]
    a = ang[y0:y1, x0:x1].ravel()[inside]
    weight = np.exp(-(x_rot[inside] ** 2 + y_rot[inside] ** 2) / (2 * (0.5 * d) ** 2))
    contrib = m * weight
    obin = ((a - orientation) % (2 * math.pi)) * (nbins / (2 * math.pi))

    r0 = np.floor(rbin).astype(np.int64)
    c0 = np.floor(cbin).astype(np.int64)
    o0 = np.floor(obin).astype(np.int64)
    rf, cf, of = rbin - r0, cbin - c0, obin - o0
    o0 %= nbins

    hist = np.zeros((d + 2, d + 2, nbins))
    for dr, wr in ((0, 1 - rf), (1, rf)):
        for dc, wc in ((0, 1 - cf), (1, cf)):
            for do, wo in ((0, 1 - of), (1, of)):
                np.add.at(
                    hist,
                    (r0 + 1 + dr, c0 + 1 + dc, (o0 + do) % nbins),
                    contrib * wr * wc * wo,
                )
    vec = hist[1:-1, 1:-1, :].ravel()
    norm = np.linalg.norm(vec)
    if norm < _NORM_FLOOR:
        return np.zeros(DESCRIPTOR_DIM)
    vec = np.minimum(vec, _MAGNITUDE_CLIP * norm)
    norm = np.linalg.norm(vec)
    if norm < _NORM_FLOOR:
        return np.zeros(DESCRIPTOR_DIM)
    return vec / norm


def compute_descriptors(
    space: ScaleSpace, keypoints: list[Keypoint]
) -> tuple[np.ndarray, list[Keypoint]]:
    """Descriptors for valid keypoints; zero-gradient patches are dropped.

    Returns a (m, 128) float64 array and the list of keypoints kept, aligned.
    """
    s = space.params.scales_per_octave
    grad_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    out: list[np.ndarray] = []
    kept: list[Keypoint] = []
    for kp in keypoints:
        level = int(np.clip(round(kp.level), 0, s + 2))
        key = (kp.octave, level)
        if key not in grad_cache:
            grad_cache[key] = _gradients(space.octaves[kp.octave].gaussians[level])
        mag, ang = grad_cache[key]
        sigma_oct = space.sigma_at(kp.octave, kp.level)
        vec = _descriptor_at(mag, ang, kp.x_oct, kp.y_oct, sigma_oct, kp.orientation)
        if not vec.any():
            continue
        out.append(vec)
        kept.append(kp)
    if not out:
        return np.zeros((0, DESCRIPTOR_DIM)), []
    return np.stack(out), kept


def keypoint_array(keypoints: list[Keypoint]) -> np.ndarray:
    """(n, 4) float32 array of x, y, scale, orientation, for descriptor caches."""
    if not keypoints:
        return np.zeros((0, 4), dtype=np.float32)
    return np.asarray(
        [[kp.x, kp.y, kp.scale, kp.orientation] for kp in keypoints], dtype=np.float32
    )
