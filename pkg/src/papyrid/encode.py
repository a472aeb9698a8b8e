"""Global descriptors: VLAD embedding, pooling, power/unit normalization,
multi-codebook concatenation and joint whitening.

Pooling in gmp mode solves the ridge system from numerics.gmp_solve. Because
each hard-assigned embedding has a single nonzero block, the system is block
diagonal over clusters and is solved exactly one 64x64 block at a time; the
dense solver is kept as the reference implementation and for arbitrary
embedding sets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serialization
from .errors import (
    DimensionMismatchError,
    EmptyDescriptorSetError,
    EmptySetForGmpError,
    InsufficientDescriptorsError,
    NotFittedError,
)
from .numerics import Codebook, PcaModel, fit_pca, gmp_solve, kmeans

POOL_MODES = ("gmp", "sum")


@dataclass(frozen=True)
class EncodingConfig:
    n_codebooks: int = 5
    k: int = 100
    gamma: float = 1000.0
    power_alpha: float = 0.5
    pool: str = "gmp"
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    pca_dim: int | None = None  # None: rank bound min(total_dim, n_docs - 1)

    def __post_init__(self):
        if self.n_codebooks < 1:
            raise ValueError("n_codebooks must be >= 1")
        if len(self.seeds) != self.n_codebooks or len(set(self.seeds)) != self.n_codebooks:
            raise ValueError("seeds must be pairwise distinct, one per codebook")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.power_alpha <= 1:
            raise ValueError("power_alpha must be in (0, 1]")
        if self.pool not in POOL_MODES:
            raise ValueError(f"pool must be one of {POOL_MODES}")

    def to_json_dict(self) -> dict:
        return {
            "n_codebooks": self.n_codebooks,
            "k": self.k,
            "gamma": self.gamma,
            "power_alpha": self.power_alpha,
            "pool": self.pool,
            "seeds": list(self.seeds),
            "pca_dim": self.pca_dim,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "EncodingConfig":
        return EncodingConfig(
            n_codebooks=int(d["n_codebooks"]),
            k=int(d["k"]),
            gamma=float(d["gamma"]),
            power_alpha=float(d["power_alpha"]),
            pool=str(d["pool"]),
            seeds=tuple(int(s) for s in d["seeds"]),
            pca_dim=None if d.get("pca_dim") is None else int(d["pca_dim"]),
        )


@dataclass(frozen=True)
class GlobalDescriptor:
    vector: np.ndarray
    doc_id: str
    empty: bool = False  # document had no descriptors; ranked last everywhere


def vlad_embed(descriptor: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Hard-assignment VLAD: the residual placed in the nearest center's block."""
    d = np.asarray(descriptor, dtype=np.float64)
    centers = codebook.centers
    if d.shape != (centers.shape[1],):
        raise DimensionMismatchError(
            f"descriptor dim {d.shape} does not match codebook dim {centers.shape[1]}"
        )
    j = int(np.argmin(np.sum((centers - d) ** 2, axis=1)))
    out = np.zeros(centers.shape[0] * centers.shape[1])
    dim = centers.shape[1]
    out[j * dim : (j + 1) * dim] = d - centers[j]
    return out


def aggregate(embeddings: np.ndarray, mode: str = "gmp", gamma: float = 1000.0) -> np.ndarray:
    """Pool a set of embeddings (rows) into one vector by sum or gmp."""
    if mode not in POOL_MODES:
        raise ValueError(f"unknown pooling mode {mode!r}")
    emb = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if emb.shape[0] == 0:
        if mode == "gmp":
            raise EmptySetForGmpError("gmp pooling over an empty set")
        return np.zeros(emb.shape[1])
    if mode == "sum":
        return emb.sum(axis=0)
    return gmp_solve(emb.T, gamma)


def power_l2(v: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Signed elementwise power followed by unit normalization; zero stays zero."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(v, dtype=np.float64)
    y = np.sign(x) * np.abs(x) ** alpha
    norm = np.linalg.norm(y)
    return y if norm == 0 else y / norm


def _vlad_pool(descs: np.ndarray, codebook: Codebook, pool: str, gamma: float) -> np.ndarray:
    """Pooled VLAD vector for one document and one codebook.

    gmp exploits the block structure of hard assignments: one ridge solve of
    size d x d per occupied cluster, identical to gmp_solve on the stacked
    embedding matrix.
    """
    centers = codebook.centers
    k, dim = centers.shape
    labels = codebook.assign(descs)
    residuals = descs - centers[labels]
    out = np.zeros((k, dim))
    for j in np.unique(labels):
        block = residuals[labels == j]
        if pool == "sum":
            out[j] = block.sum(axis=0)
        else:
            gram = block.T @ block
            gram[np.diag_indices(dim)] += gamma
            out[j] = np.linalg.solve(gram, block.sum(axis=0))
    return out.ravel()


@dataclass
class Encoder:
    config: EncodingConfig
    codebooks: list[Codebook] = field(default_factory=list)
    joint_pca: PcaModel | None = None

    @property
    def concatenated_dim(self) -> int:
        return sum(cb.centers.size for cb in self.codebooks)

    def _check_fitted(self):
        if not self.codebooks or self.joint_pca is None:
            raise NotFittedError("encoder is not fitted")

    def pre_pca_vector(self, descriptors: np.ndarray) -> np.ndarray:
        """Concatenated per-codebook pooled vectors, before joint whitening."""
        descs = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
        if descs.shape[0] == 0:
            raise EmptyDescriptorSetError("document has no descriptors")
        parts = [
            power_l2(_vlad_pool(descs, cb, self.config.pool, self.config.gamma), self.config.power_alpha)
            for cb in self.codebooks
        ]
        return np.concatenate(parts)


def fit_encoder(per_document_descriptors: list[np.ndarray], config: EncodingConfig = EncodingConfig()) -> Encoder:
    """Train the codebooks on pooled descriptors and fit the joint whitening.

    Documents with no descriptors are skipped for fitting and flagged at
    encoding time.
    """
    nonempty = [np.atleast_2d(np.asarray(d, dtype=np.float64)) for d in per_document_descriptors]
    nonempty = [d for d in nonempty if d.shape[0] > 0]
    if len(nonempty) < 2:
        raise InsufficientDescriptorsError("need at least 2 documents with descriptors")
    pooled = np.concatenate(nonempty, axis=0)
    if pooled.shape[0] < 10 * config.k:
        raise InsufficientDescriptorsError(
            f"pooled descriptor count {pooled.shape[0]} below 10 * k = {10 * config.k}"
        )

    encoder = Encoder(config=config)
    for seed in config.seeds:
        encoder.codebooks.append(kmeans(pooled, config.k, seed=seed))

    vectors = np.stack([encoder.pre_pca_vector(d) for d in nonempty])
    total_dim = vectors.shape[1]
    rank_bound = min(total_dim, len(nonempty) - 1)
    m = rank_bound if config.pca_dim is None else min(config.pca_dim, rank_bound)
    encoder.joint_pca = fit_pca(vectors, m=m, whiten=True)
    return encoder


def encode_document(encoder: Encoder, descriptors: np.ndarray, doc_id: str = "") -> GlobalDescriptor:
    """Full encoding of one document; raises on an empty descriptor set."""
    encoder._check_fitted()
    vec = encoder.pre_pca_vector(descriptors)
    projected = encoder.joint_pca.transform(vec)
    norm = np.linalg.norm(projected)
    if norm > 0:
        projected = projected / norm
    return GlobalDescriptor(vector=projected, doc_id=doc_id)


def encode_corpus(
    encoder: Encoder, per_document_descriptors: list[np.ndarray], doc_ids: list[str]
) -> list[GlobalDescriptor]:
    """Encode every document, flagging empty ones with zero vectors."""
    encoder._check_fitted()
    out: list[GlobalDescriptor] = []
    for doc_id, descs in zip(doc_ids, per_document_descriptors):
        try:
            out.append(encode_document(encoder, descs, doc_id))
        except EmptyDescriptorSetError:
            warnings.warn(f"document {doc_id} has no descriptors; using a flagged zero vector", stacklevel=2)
            out.append(
                GlobalDescriptor(vector=np.zeros(encoder.joint_pca.out_dim), doc_id=doc_id, empty=True)
            )
    return out


ENCODER_CONFIG_FILE = "config.json"
ENCODER_PCA_FILE = "joint_pca.pwmd"
GLOBAL_DESCRIPTOR_FILE = "global_descriptors.pwmd"
DOCUMENTS_FILE = "documents.csv"


def save_encoder(encoder: Encoder, directory: str | Path) -> None:
    encoder._check_fitted()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, cb in enumerate(encoder.codebooks):
        serialization.save_codebook(cb, directory / f"codebook_{i}.pwmd")
    serialization.save_pca(encoder.joint_pca, directory / ENCODER_PCA_FILE)
    (directory / ENCODER_CONFIG_FILE).write_text(
        json.dumps(encoder.config.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_encoder(directory: str | Path) -> Encoder:
    directory = Path(directory)
    config = EncodingConfig.from_json_dict(
        json.loads((directory / ENCODER_CONFIG_FILE).read_text(encoding="utf-8"))
    )
    codebooks = [
        serialization.load_codebook(directory / f"codebook_{i}.pwmd")
        for i in range(config.n_codebooks)
    ]
    joint_pca = serialization.load_pca(directory / ENCODER_PCA_FILE)
    return Encoder(config=config, codebooks=codebooks, joint_pca=joint_pca)
