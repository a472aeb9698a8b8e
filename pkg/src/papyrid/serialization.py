"""Binary file formats for fitted models and per-document descriptor caches.

Model files ("PWMD"):
    magic b"PWMD", u8 kind, then a kind-specific little-endian layout.
    kind 1 codebook: u32 k, u32 d, i64 seed, f64 inertia, k*d f64 centers (row-major)
    kind 2 pca:      u32 d, u32 m, u8 whiten, f64 eps, d f64 mean,
                     d*m f64 basis (row-major), m f64 eigenvalues
    kind 3 matrix:   u32 rows, u32 cols, rows*cols f64 values (row-major)

Descriptor caches ("PWID"):
    magic b"PWID", u8 version=1, u32 count, u32 dim,
    count*dim f32 descriptors (row-major),
    count records of 4 f32: x, y, scale, orientation.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .numerics import Codebook, PcaModel

MODEL_MAGIC = b"PWMD"
KIND_CODEBOOK = 1
KIND_PCA = 2
KIND_MATRIX = 3

DESCRIPTOR_MAGIC = b"PWID"
DESCRIPTOR_VERSION = 1


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise InputError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def save_codebook(cb: Codebook, path: str | Path) -> None:
    centers = np.ascontiguousarray(cb.centers, dtype="<f8")
    k, d = centers.shape
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<BIIqd", KIND_CODEBOOK, k, d, cb.seed, cb.inertia))
        fh.write(centers.tobytes())


def save_pca(model: PcaModel, path: str | Path) -> None:
    basis = np.ascontiguousarray(model.basis, dtype="<f8")
    d, m = basis.shape
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<BIIBd", KIND_PCA, d, m, int(model.whiten), model.eps))
        fh.write(np.ascontiguousarray(model.mean, dtype="<f8").tobytes())
        fh.write(basis.tobytes())
        fh.write(np.ascontiguousarray(model.eigenvalues, dtype="<f8").tobytes())


def save_matrix(matrix: np.ndarray, path: str | Path) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<BII", KIND_MATRIX, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def _load_model(path: str | Path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic != MODEL_MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}")
        (kind,) = struct.unpack("<B", _read_exact(fh, 1))
        if kind == KIND_CODEBOOK:
            k, d, seed, inertia = struct.unpack("<IIqd", _read_exact(fh, 24))
            centers = np.frombuffer(_read_exact(fh, 8 * k * d), dtype="<f8").reshape(k, d)
            return Codebook(centers=centers.copy(), k=k, seed=seed, inertia=inertia)
        if kind == KIND_PCA:
            d, m, whiten, eps = struct.unpack("<IIBd", _read_exact(fh, 17))
            mean = np.frombuffer(_read_exact(fh, 8 * d), dtype="<f8").copy()
            basis = np.frombuffer(_read_exact(fh, 8 * d * m), dtype="<f8").reshape(d, m).copy()
            eigenvalues = np.frombuffer(_read_exact(fh, 8 * m), dtype="<f8").copy()
            return PcaModel(mean=mean, basis=basis, eigenvalues=eigenvalues, whiten=bool(whiten), eps=eps)
        if kind == KIND_MATRIX:
            rows, cols = struct.unpack("<II", _read_exact(fh, 8))
            return np.frombuffer(_read_exact(fh, 8 * rows * cols), dtype="<f8").reshape(rows, cols).copy()
        raise InputError(f"{path}: unknown model kind {kind}")


def load_codebook(path: str | Path) -> Codebook:
    model = _load_model(path)
    if not isinstance(model, Codebook):
        raise InputError(f"{path} does not hold a codebook")
    return model


def load_pca(path: str | Path) -> PcaModel:
    model = _load_model(path)
    if not isinstance(model, PcaModel):
        raise InputError(f"{path} does not hold a PCA model")
    return model


def load_matrix(path: str | Path) -> np.ndarray:
    model = _load_model(path)
    if not isinstance(model, np.ndarray):
        raise InputError(f"{path} does not hold a matrix")
    return model


def save_descriptors(path: str | Path, descriptors: np.ndarray, keypoints: np.ndarray) -> None:
    """Write a per-document descriptor cache.

    ``keypoints`` is a (count, 4) float array of x, y, scale, orientation.
    """
    descs = np.ascontiguousarray(descriptors, dtype="<f4")
    kps = np.ascontiguousarray(keypoints, dtype="<f4")
    if descs.ndim != 2 or kps.shape != (descs.shape[0], 4):
        raise InputError(
            f"descriptor/keypoint shape mismatch: {descs.shape} vs {kps.shape}"
        )
    with open(path, "wb") as fh:
        fh.write(DESCRIPTOR_MAGIC)
        fh.write(struct.pack("<BII", DESCRIPTOR_VERSION, descs.shape[0], descs.shape[1]))
        fh.write(descs.tobytes())
        fh.write(kps.tobytes())


def load_descriptors(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic != DESCRIPTOR_MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}")
        version, count, dim = struct.unpack("<BII", _read_exact(fh, 9))
        if version != DESCRIPTOR_VERSION:
            raise InputError(f"{path}: unsupported version {version}")
        descs = np.frombuffer(_read_exact(fh, 4 * count * dim), dtype="<f4").reshape(count, dim)
        kps = np.frombuffer(_read_exact(fh, 4 * count * 4), dtype="<f4").reshape(count, 4)
    return descs.copy(), kps.copy()
