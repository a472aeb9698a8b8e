"""Unsupervised numerical kernels: k-means, PCA whitening, the pooling ridge solve.

All fitting is done in float64 regardless of input precision so that reruns
with the same seed are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import (
    ConvergenceError,
    NonFiniteInputError,
    NotFittedError,
    RankDeficientError,
    TooFewPointsError,
)

DUAL_MAX_COLUMNS = 512  # below this the n x n dual system is solved directly
CG_TOL = 1e-8
CG_MAX_ITERS = 1000


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray  # (k, d) float64
    k: int
    seed: int
    inertia: float

    def assign(self, data: np.ndarray) -> np.ndarray:
        """Index of the nearest center per row; ties go to the smallest index."""
        return _assign_labels(np.asarray(data, dtype=np.float64), self.centers)[0]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (d,)
    basis: np.ndarray  # (d, m), orthonormal columns
    eigenvalues: np.ndarray  # (m,)
    whiten: bool
    eps: float = 1e-8

    @property
    def in_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.in_dim:
            raise NotFittedError(
                f"model expects dimension {self.in_dim}, got {x.shape[1]}"
            )
        y = (x - self.mean) @ self.basis
        if self.whiten:
            y = y / np.sqrt(self.eigenvalues + self.eps)
        return y[0] if squeeze else y


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Force the largest-magnitude entry of each column positive (determinism)."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def fit_pca(data: np.ndarray, m: int, whiten: bool = False, eps: float = 1e-8) -> PcaModel:
    """PCA by SVD of the centered data, with a deterministic sign convention."""
    x = np.asarray(data, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise TooFewPointsError(f"need at least 2 samples, got {n}")
    if m > min(d, n - 1):
        raise ValueError(f"m={m} exceeds min(d, n-1) = {min(d, n - 1)}")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    eigenvalues = (s**2) / (n - 1)
    if np.all(eigenvalues <= eps):
        raise RankDeficientError("all eigenvalues at or below eps")
    basis = _fix_signs(vt[:m].T.copy())
    return PcaModel(mean=mean, basis=basis, eigenvalues=eigenvalues[:m], whiten=whiten, eps=eps)


def _assign_labels(data: np.ndarray, centers: np.ndarray, chunk: int = 16384) -> tuple[np.ndarray, np.ndarray]:
    """Labels and squared distances to the nearest center, chunked over rows."""
    n = data.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    c2 = np.einsum("ij,ij->i", centers, centers)
    for start in range(0, n, chunk):
        block = data[start : start + chunk]
        d2 = block @ centers.T
        d2 *= -2.0
        d2 += c2[None, :]
        d2 += np.einsum("ij,ij->i", block, block)[:, None]
        labels[start : start + chunk] = np.argmin(d2, axis=1)
        best[start : start + chunk] = np.maximum(d2[np.arange(block.shape[0]), labels[start : start + chunk]], 0.0)
    return labels, best


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = data[first]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = data[idx]
        d2 = np.minimum(d2, np.sum((data - centers[j]) ** 2, axis=1))
    return centers


def kmeans(
    data: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-4,
) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding and deterministic reruns.

    Empty clusters are reseeded to the point currently farthest from its own
    center. Stops when the relative inertia improvement drops below ``tol``.
    """
    x = np.asarray(data, dtype=np.float64)
    n = x.shape[0]
    if n < k:
        raise TooFewPointsError(f"{n} points for k={k}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("kmeans input contains non-finite values")

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)
    prev_inertia = np.inf
    inertia = np.inf
    for _ in range(max_iters):
        labels, d2 = _assign_labels(x, centers)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        empty = np.flatnonzero(counts == 0)
        for j in empty:
            far = int(np.argmax(d2))
            centers[j] = x[far]
            labels[far] = j
            counts[j] = 1.0
            d2[far] = 0.0
        onehot = sparse.coo_matrix(
            (np.ones(n), (labels, np.arange(n))), shape=(k, n)
        ).tocsr()
        sums = onehot @ x
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        centers = sums / counts[:, None]
        inertia = float(d2.sum())
        if np.isfinite(prev_inertia) and prev_inertia - inertia <= tol * prev_inertia:
            break
        prev_inertia = inertia

    _, d2 = _assign_labels(x, centers)
    inertia = float(d2.sum())
    return Codebook(centers=centers, k=k, seed=seed, inertia=inertia)


def _conjugate_gradient(matvec, b: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    """CG on an SPD operator; relative residual stopping rule."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        ap = matvec(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * bnorm:
        return x
    raise ConvergenceError(f"conjugate gradients did not reach {tol} in {max_iters} iterations")


def gmp_solve(phi: np.ndarray, gamma: float, *, tol: float = CG_TOL, max_iters: int = CG_MAX_ITERS) -> np.ndarray:
    """Solve argmin ||phi^T xi - 1||^2 + gamma ||xi||^2 for a (d, n) matrix.

    Small n uses the dual (n x n) system directly; otherwise conjugate
    gradients on the primal operator, never materializing a d x d matrix.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] < 1:
        raise ValueError(f"expected a (d, n) matrix with n >= 1, got shape {phi.shape}")
    if not np.all(np.isfinite(phi)):
        raise NonFiniteInputError("pooling input contains non-finite values")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d, n = phi.shape
    ones = np.ones(n, dtype=np.float64)
    if n <= DUAL_MAX_COLUMNS:
        gram = phi.T @ phi
        gram[np.diag_indices(n)] += gamma
        coeff = np.linalg.solve(gram, ones)
        return phi @ coeff
    b = phi @ ones

    def matvec(v: np.ndarray) -> np.ndarray:
        return phi @ (phi.T @ v) + gamma * v

    return _conjugate_gradient(matvec, b, tol, max_iters)
