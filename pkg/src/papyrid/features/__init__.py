"""Local feature extraction: scale space, keypoints, descriptors, normalization."""

from .descriptors import DESCRIPTOR_DIM, compute_descriptors, keypoint_array
from .keypoints import Keypoint, detect_keypoints, filter_keypoints
from .scalespace import ScaleSpace, ScaleSpaceParams, build_scale_space
from .transform import (
    DescriptorTransform,
    apply_descriptor_transform,
    fit_descriptor_transform,
)

FEATURE_MODES = ("sift", "rsift")


def extract_document(image, mask=None, mode: str = "sift", params: ScaleSpaceParams | None = None):
    """Detect, filter and describe keypoints for one document.

    Mode ``rsift`` keeps scale-space minima on ink pixels; ``sift`` keeps all
    extrema. When a mask is given, keypoints in fully blank mask windows are
    dropped in both modes. Returns (descriptors (n, 128), keypoints).
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    params = params or ScaleSpaceParams()
    space = build_scale_space(image, params)
    kps = detect_keypoints(space, mode="minima_only" if mode == "rsift" else "all")
    if mask is not None:
        kps = filter_keypoints(kps, mask, on_ink=(mode == "rsift"), require_nonblank=True)
    descs, kept = compute_descriptors(space, kps)
    return descs, kept


__all__ = [
    "DESCRIPTOR_DIM",
    "DescriptorTransform",
    "FEATURE_MODES",
    "Keypoint",
    "ScaleSpace",
    "ScaleSpaceParams",
    "apply_descriptor_transform",
    "build_scale_space",
    "compute_descriptors",
    "detect_keypoints",
    "extract_document",
    "filter_keypoints",
    "fit_descriptor_transform",
    "keypoint_array",
]
