"""Scale-space keypoint detection with batched subpixel refinement.

Keypoints are 3x3x3 strict extrema of the DoG stacks. Dark-on-light blobs are
minima here (see the sign convention in scalespace), so restricting detection
to minima keeps points on the writing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import DimensionMismatchError
from .scalespace import ScaleSpace

MODES = ("all", "minima_only")

SIGN_MIN = "min"
SIGN_MAX = "max"

_MAX_RELOCATIONS = 5
_ORI_BINS = 36
_ORI_SIGMA_FACTOR = 1.5
_ORI_RADIUS_FACTOR = 3.0
_ORI_PEAK_RATIO = 0.8


@dataclass(frozen=True)
class Keypoint:
    x: float  # original-image coordinates
    y: float
    scale: float  # original-image blur scale
    orientation: float  # radians in [0, 2*pi)
    extremum_sign: str  # "min" or "max"
    octave: int
    level: float  # fractional DoG level within the octave
    x_oct: float  # octave-level coordinates
    y_oct: float


def _gather_derivatives(d: np.ndarray, ls, ys, xs):
    """First and second central differences of the DoG stack at given voxels."""
    dx = 0.5 * (d[ls, ys, xs + 1] - d[ls, ys, xs - 1])
    dy = 0.5 * (d[ls, ys + 1, xs] - d[ls, ys - 1, xs])
    dl = 0.5 * (d[ls + 1, ys, xs] - d[ls - 1, ys, xs])
    grad = np.stack([dx, dy, dl], axis=1)

    center = d[ls, ys, xs]
    dxx = d[ls, ys, xs + 1] - 2 * center + d[ls, ys, xs - 1]
    dyy = d[ls, ys + 1, xs] - 2 * center + d[ls, ys - 1, xs]
    dll = d[ls + 1, ys, xs] - 2 * center + d[ls - 1, ys, xs]
    dxy = 0.25 * (
        d[ls, ys + 1, xs + 1] - d[ls, ys + 1, xs - 1] - d[ls, ys - 1, xs + 1] + d[ls, ys - 1, xs - 1]
    )
    dxl = 0.25 * (
        d[ls + 1, ys, xs + 1] - d[ls + 1, ys, xs - 1] - d[ls - 1, ys, xs + 1] + d[ls - 1, ys, xs - 1]
    )
    dyl = 0.25 * (
        d[ls + 1, ys + 1, xs] - d[ls + 1, ys - 1, xs] - d[ls - 1, ys + 1, xs] + d[ls - 1, ys - 1, xs]
    )
    hess = np.empty((len(ls), 3, 3), dtype=np.float64)
    hess[:, 0, 0] = dxx
    hess[:, 1, 1] = dyy
    hess[:, 2, 2] = dll
    hess[:, 0, 1] = hess[:, 1, 0] = dxy
    hess[:, 0, 2] = hess[:, 2, 0] = dxl
    hess[:, 1, 2] = hess[:, 2, 1] = dyl
    return grad, hess, center


def _refine_octave(dogs: np.ndarray, ls, ys, xs, signs, params):
    """Iteratively re-localize candidates; returns refined positions and values."""
    s = dogs.shape[0] - 2
    h, w = dogs.shape[1], dogs.shape[2]
    border = params.border

    alive = np.ones(len(ls), dtype=bool)
    offsets = np.zeros((len(ls), 3), dtype=np.float64)
    settled = np.zeros(len(ls), dtype=bool)
    grads = np.zeros((len(ls), 3), dtype=np.float64)
    values = np.zeros(len(ls), dtype=np.float64)
    hess_spatial = np.zeros((len(ls), 3), dtype=np.float64)  # dxx, dyy, dxy

    ls = ls.astype(np.int64).copy()
    ys = ys.astype(np.int64).copy()
    xs = xs.astype(np.int64).copy()

    for _ in range(_MAX_RELOCATIONS):
        idx = np.flatnonzero(alive & ~settled)
        if idx.size == 0:
            break
        grad, hess, center = _gather_derivatives(dogs, ls[idx], ys[idx], xs[idx])
        dets = np.linalg.det(hess)
        ok = np.abs(dets) > 1e-30
        alive[idx[~ok]] = False
        idx = idx[ok]
        if idx.size == 0:
            continue
        off = -np.linalg.solve(hess[ok], grad[ok][..., None])[..., 0]
        # Step only when the offset clearly leaves the voxel; this avoids
        # oscillation between two voxels at half-pixel boundaries.
        step = np.where(off > 0.6, 1, np.where(off < -0.6, -1, 0)).astype(np.int64)
        done = np.all(step == 0, axis=1)

        settled_idx = idx[done]
        settled[settled_idx] = True
        offsets[settled_idx] = np.clip(off[done], -0.6, 0.6)
        grads[settled_idx] = grad[ok][done]
        values[settled_idx] = center[ok][done]
        hess_spatial[settled_idx, 0] = hess[ok][done][:, 0, 0]
        hess_spatial[settled_idx, 1] = hess[ok][done][:, 1, 1]
        hess_spatial[settled_idx, 2] = hess[ok][done][:, 0, 1]

        move_idx = idx[~done]
        if move_idx.size:
            step = step[~done]
            xs[move_idx] += step[:, 0]
            ys[move_idx] += step[:, 1]
            ls[move_idx] += step[:, 2]
            inside = (
                (ls[move_idx] >= 1)
                & (ls[move_idx] <= s)
                & (ys[move_idx] >= border)
                & (ys[move_idx] < h - border)
                & (xs[move_idx] >= border)
                & (xs[move_idx] < w - border)
            )
            alive[move_idx[~inside]] = False

    alive &= settled

    # Contrast test on the interpolated value.
    interp = values + 0.5 * np.einsum("ij,ij->i", grads, offsets)
    alive &= np.abs(interp) >= params.contrast_threshold / s

    # Edge test on the 2x2 spatial Hessian.
    dxx, dyy, dxy = hess_spatial[:, 0], hess_spatial[:, 1], hess_spatial[:, 2]
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    r = params.edge_threshold
    alive &= (det > 0) & (r * tr * tr < (r + 1) ** 2 * det)

    keep = np.flatnonzero(alive)
    return (
        xs[keep] + offsets[keep, 0],
        ys[keep] + offsets[keep, 1],
        ls[keep] + offsets[keep, 2],
        signs[keep],
        keep,
    )


def _candidate_extrema(dogs: np.ndarray, pre_threshold: float, border: int):
    """Strict 26-neighbor extrema of the DoG stack, away from borders."""
    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False
    neighbor_max = ndimage.maximum_filter(dogs, footprint=footprint, mode="constant", cval=-np.inf)
    neighbor_min = ndimage.minimum_filter(dogs, footprint=footprint, mode="constant", cval=np.inf)
    is_max = (dogs > neighbor_max) & (dogs > pre_threshold)
    is_min = (dogs < neighbor_min) & (dogs < -pre_threshold)
    cand = is_max | is_min
    cand[0] = cand[-1] = False
    cand[:, :border, :] = cand[:, -border:, :] = False
    cand[:, :, :border] = cand[:, :, -border:] = False
    ls, ys, xs = np.nonzero(cand)
    signs = np.where(is_min[ls, ys, xs], SIGN_MIN, SIGN_MAX)
    return ls, ys, xs, signs


def _orientation_histogram(level_img: np.ndarray, x: float, y: float, sigma: float) -> np.ndarray:
    h, w = level_img.shape
    radius = int(round(_ORI_RADIUS_FACTOR * _ORI_SIGMA_FACTOR * sigma))
    cx, cy = int(round(x)), int(round(y))
    y0, y1 = max(cy - radius, 1), min(cy + radius + 1, h - 1)
    x0, x1 = max(cx - radius, 1), min(cx + radius + 1, w - 1)
    if y1 <= y0 or x1 <= x0:
        return np.zeros(_ORI_BINS)
    gx = 0.5 * (level_img[y0:y1, x0 + 1 : x1 + 1] - level_img[y0:y1, x0 - 1 : x1 - 1])
    gy = 0.5 * (level_img[y0 + 1 : y1 + 1, x0:x1] - level_img[y0 - 1 : y1 - 1, x0:x1])
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % (2 * math.pi)

    yy, xx = np.mgrid[y0:y1, x0:x1]
    weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * (_ORI_SIGMA_FACTOR * sigma) ** 2))
    bins = np.floor(ang * (_ORI_BINS / (2 * math.pi))).astype(np.int64) % _ORI_BINS
    hist = np.zeros(_ORI_BINS)
    np.add.at(hist, bins.ravel(), (mag * weight).ravel())

    # One pass of the [1, 4, 6, 4, 1] / 16 circular smoothing kernel.
    smooth = (
        6 * hist
        + 4 * (np.roll(hist, 1) + np.roll(hist, -1))
        + np.roll(hist, 2)
        + np.roll(hist, -2)
    ) / 16.0
    return smooth


def _peak_orientations(hist: np.ndarray) -> list[float]:
    top = hist.max()
    if top <= 0:
        return [0.0]
    left = np.roll(hist, 1)
    right = np.roll(hist, -1)
    peaks = np.flatnonzero((hist > left) & (hist > right) & (hist >= _ORI_PEAK_RATIO * top))
    out = []
    width = 2 * math.pi / _ORI_BINS
    for p in peaks:
        denom = hist[p - 1] - 2 * hist[p] + hist[(p + 1) % _ORI_BINS]
        shift = 0.0 if denom == 0 else 0.5 * (hist[p - 1] - hist[(p + 1) % _ORI_BINS]) / denom
        out.append(((p + 0.5 + shift) % _ORI_BINS) * width)
    return out or [0.0]


def detect_keypoints(space: ScaleSpace, mode: str = "all") -> list[Keypoint]:
    """Detect, refine and orient DoG extrema; minima_only keeps dark blobs."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    params = space.params
    s = params.scales_per_octave
    pre_threshold = 0.5 * params.contrast_threshold / s
    orig_h, orig_w = space.original_shape

    keypoints: list[Keypoint] = []
    for octave in space.octaves:
        ls, ys, xs, signs = _candidate_extrema(octave.dogs, pre_threshold, params.border)
        if ls.size == 0:
            continue
        if mode == "minima_only":
            keep = signs == SIGN_MIN
            ls, ys, xs, signs = ls[keep], ys[keep], xs[keep], signs[keep]
            if ls.size == 0:
                continue
        rx, ry, rl, rsigns, _ = _refine_octave(octave.dogs, ls, ys, xs, signs, params)

        for x_oct, y_oct, level, sign in zip(rx, ry, rl, rsigns):
            sigma_oct = space.sigma_at(octave.index, level)
            x_img, y_img = space.to_original(octave.index, x_oct, y_oct)
            if not (0 <= x_img < orig_w and 0 <= y_img < orig_h):
                continue
            scale_img = sigma_oct * (2**octave.index) * params.downsample_factor
            gauss_level = int(np.clip(round(level), 0, s + 2))
            if params.upright:
                angles = [0.0]
            else:
                angles = _peak_orientations(
                    _orientation_histogram(octave.gaussians[gauss_level], x_oct, y_oct, sigma_oct)
                )
            for angle in angles:
                keypoints.append(
                    Keypoint(
                        x=float(x_img),
                        y=float(y_img),
                        scale=float(scale_img),
                        orientation=float(angle),
                        extremum_sign=str(sign),
                        octave=octave.index,
                        level=float(level),
                        x_oct=float(x_oct),
                        y_oct=float(y_oct),
                    )
                )
    keypoints.sort(key=lambda kp: (kp.y, kp.x, kp.scale, kp.orientation))
    return keypoints


def filter_keypoints(
    keypoints: list[Keypoint],
    mask: np.ndarray,
    on_ink: bool = True,
    blank_patch_size: int = 32,
    require_nonblank: bool = True,
) -> list[Keypoint]:
    """Keep keypoints on ink pixels and/or near any ink at all.

    ``mask`` must match the original image the keypoints were detected on.
    The blank test drops keypoints whose centered blank_patch_size window in
    the mask holds no ink pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    for kp in keypoints:
        if not (0 <= kp.x < w and 0 <= kp.y < h):
            raise DimensionMismatchError(
                f"keypoint ({kp.x:.1f}, {kp.y:.1f}) outside mask of shape {(h, w)}"
            )
    if not keypoints:
        return []

    xs = np.clip(np.rint([kp.x for kp in keypoints]).astype(np.int64), 0, w - 1)
    ys = np.clip(np.rint([kp.y for kp in keypoints]).astype(np.int64), 0, h - 1)
    keep = np.ones(len(keypoints), dtype=bool)
    if on_ink:
        keep &= mask[ys, xs]
    if require_nonblank:
        ii = np.zeros((h + 1, w + 1), dtype=np.int64)
        np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1, out=ii[1:, 1:])
        half = blank_patch_size // 2
        y0 = np.clip(ys - half, 0, h)
        y1 = np.clip(ys + half, 0, h)
        x0 = np.clip(xs - half, 0, w)
        x1 = np.clip(xs + half, 0, w)
        counts = ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]
        keep &= counts > 0
    return [kp for kp, k in zip(keypoints, keep) if k]
