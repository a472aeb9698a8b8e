"""Descriptor normalization: root-histogram map, whitening PCA to 64-D, unit norm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientSampleError
from ..numerics import PcaModel, fit_pca

OUT_DIM = 64
FIT_SAMPLE_FACTOR = 10  # minimum sample size per output dimension


@dataclass(frozen=True)
class DescriptorTransform:
    pca: PcaModel
    hellinger_power: float = 0.5
    eps: float = 1e-10


def _root_map(descs: np.ndarray, power: float, eps: float) -> np.ndarray:
    """L1-normalize rows then apply a signed elementwise power."""
    x = np.atleast_2d(np.asarray(descs, dtype=np.float64))
    l1 = np.abs(x).sum(axis=1, keepdims=True)
    x = np.divide(x, l1, out=np.zeros_like(x), where=l1 > eps)
    return np.sign(x) * np.abs(x) ** power


def fit_descriptor_transform(
    descriptors: np.ndarray,
    out_dim: int = OUT_DIM,
    power: float = 0.5,
    eps: float = 1e-10,
) -> DescriptorTransform:
    """Fit the whitening PCA on root-mapped descriptors."""
    descs = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    n, d = descs.shape
    if n < FIT_SAMPLE_FACTOR * out_dim:
        raise InsufficientSampleError(
            f"need at least {FIT_SAMPLE_FACTOR * out_dim} descriptors to fit, got {n}"
        )
    mapped = _root_map(descs, power, eps)
    pca = fit_pca(mapped, m=out_dim, whiten=True)
    return DescriptorTransform(pca=pca, hellinger_power=power, eps=eps)


def apply_descriptor_transform(
    transform: DescriptorTransform, descriptors: np.ndarray, l2: bool = True
) -> np.ndarray:
    """Root map, whitened projection, then unit normalization per row.

    Pass ``l2=False`` to inspect the whitened coordinates before the final
    normalization (their training covariance is close to identity).
    """
    x = np.asarray(descriptors, dtype=np.float64)
    squeeze = x.ndim == 1
    mapped = _root_map(x, transform.hellinger_power, transform.eps)
    y = transform.pca.transform(mapped)
    y = np.atleast_2d(y)
    if l2:
        norms = np.linalg.norm(y, axis=1, keepdims=True)
        y = np.divide(y, norms, out=np.zeros_like(y), where=norms > transform.eps)
    return y[0] if squeeze else y
