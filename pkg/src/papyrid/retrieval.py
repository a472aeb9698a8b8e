"""Cosine-distance retrieval: leave-one-image-out ranking, Top-k, mAP, heatmaps.

Average precision is accumulated in exact rational arithmetic and converted
to float once, so oracle comparisons are reproducible to the last bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .encode import GlobalDescriptor
from .errors import DimensionMismatchError, TooFewDocumentsError

ZERO_VECTOR_DISTANCE = 2.0  # flagged-empty documents rank last


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity, in [0, 2]; defined as 2 when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return ZERO_VECTOR_DISTANCE
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


def distance_matrix(descriptors: list[GlobalDescriptor]) -> np.ndarray:
    """Symmetric cosine-distance matrix with a zero diagonal."""
    vectors = np.stack([d.vector for d in descriptors]).astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    unit = vectors / safe[:, None]
    dm = 1.0 - unit @ unit.T
    dm[zero, :] = ZERO_VECTOR_DISTANCE
    dm[:, zero] = ZERO_VECTOR_DISTANCE
    dm = np.clip((dm + dm.T) / 2.0, 0.0, 2.0)
    np.fill_diagonal(dm, 0.0)
    return dm


def average_precision(ranked_relevance) -> float:
    """Mean of precision at each relevant rank; 0 when nothing is relevant."""
    rel = [bool(r) for r in ranked_relevance]
    hits = 0
    total = Fraction(0)
    for i, r in enumerate(rel, start=1):
        if r:
            hits += 1
            total += Fraction(hits, i)
    if hits == 0:
        return 0.0
    return float(total / hits)


@dataclass(frozen=True)
class QueryResult:
    doc_id: str
    ap: float
    first_correct_rank: int | None  # 1-based; None when no gallery doc matches


@dataclass
class RetrievalReport:
    top1: float  # percentages over included queries
    top5: float
    top10: float
    map: float
    per_query: list[QueryResult]
    excluded: list[str] = field(default_factory=list)  # queries with no same-writer gallery doc

    def to_json_dict(self) -> dict:
        return {
            "top1": round(self.top1, 1),
            "top5": round(self.top5, 1),
            "top10": round(self.top10, 1),
            "map": round(self.map, 1),
            "excluded": list(self.excluded),
            "per_query": [
                {"doc_id": q.doc_id, "ap": q.ap, "first_correct_rank": q.first_correct_rank}
                for q in self.per_query
            ],
        }


def leave_one_out(
    descriptors: list[GlobalDescriptor], labels: list[str]
) -> tuple[RetrievalReport, np.ndarray]:
    """Rank every other document for each query; soft Top-k and mAP.

    Two kinds of query are excluded from the metrics and listed in the
    report: documents whose writer has no second document, and flagged
    empty documents (their ranking would be a pure tie-break). Both still
    serve as gallery items; empty ones sit at the maximum distance.
    """
    n = len(descriptors)
    if n < 2:
        raise TooFewDocumentsError(f"need at least 2 documents, got {n}")
    if len(labels) != n:
        raise DimensionMismatchError("labels do not match descriptors")
    dm = distance_matrix(descriptors)
    doc_ids = [d.doc_id for d in descriptors]
    label_arr = np.asarray(labels)
    id_rank = np.empty(n, dtype=np.int64)
    id_rank[np.argsort(np.asarray(doc_ids))] = np.arange(n)

    per_query: list[QueryResult] = []
    excluded: list[str] = []
    hits = {1: 0, 5: 0, 10: 0}
    indices = np.arange(n)
    for q in range(n):
        if descriptors[q].empty or int(np.sum(label_arr == labels[q])) < 2:
            excluded.append(doc_ids[q])
            continue
        others = indices[indices != q]
        # Ascending distance; ties broken by doc id.
        order = others[np.lexsort((id_rank[others], dm[q, others]))]
        rel = label_arr[order] == labels[q]
        for k in hits:
            hits[k] += bool(rel[:k].any())
        first = int(np.flatnonzero(rel)[0]) + 1 if rel.any() else None
        per_query.append(QueryResult(doc_id=doc_ids[q], ap=average_precision(rel), first_correct_rank=first))

    if not per_query:
        raise TooFewDocumentsError("every query was excluded (singleton writers or empty documents)")
    m = len(per_query)
    report = RetrievalReport(
        top1=100.0 * hits[1] / m,
        top5=100.0 * hits[5] / m,
        top10=100.0 * hits[10] / m,
        map=100.0 * float(np.mean([q.ap for q in per_query])),
        per_query=per_query,
        excluded=excluded,
    )
    return report, dm


def scribe_similarity(
    dm: np.ndarray, labels: list[str]
) -> tuple[np.ndarray, list[str], list[str]]:
    """Writer-by-writer mean distance, self-comparisons excluded.

    Returns (matrix, writers in first-occurrence order, writers whose
    diagonal is undefined because they have a single document; those
    diagonal entries are NaN).
    """
    dm = np.asarray(dm, dtype=np.float64)
    labels = list(labels)
    if dm.shape[0] != len(labels):
        raise DimensionMismatchError("distance matrix does not match labels")
    writers: list[str] = []
    for w in labels:
        if w not in writers:
            writers.append(w)
    groups = {w: np.flatnonzero(np.asarray(labels) == w) for w in writers}

    out = np.zeros((len(writers), len(writers)))
    missing: list[str] = []
    for a, wa in enumerate(writers):
        for b, wb in enumerate(writers):
            ia, ib = groups[wa], groups[wb]
            if a == b:
                if len(ia) < 2:
                    out[a, b] = np.nan
                    missing.append(wa)
                    continue
                block = dm[np.ix_(ia, ia)]
                total = block.sum() - np.trace(block)
                out[a, b] = total / (len(ia) * (len(ia) - 1))
            else:
                out[a, b] = dm[np.ix_(ia, ib)].mean()
    return out, writers, missing


def export_heatmap(
    matrix: np.ndarray,
    labels: list[str],
    png_path: str | Path,
    csv_path: str | Path | None = None,
    cell: int = 8,
) -> None:
    """Grayscale heatmap (darkest = most similar) plus a labeled CSV.

    Scaling is linear over the observed finite range; a constant matrix
    renders mid-gray. NaN cells (undefined diagonals) render white.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(labels):
        raise DimensionMismatchError(f"matrix {m.shape} does not match {len(labels)} labels")
    finite = m[np.isfinite(m)]
    if finite.size == 0:
        raise DimensionMismatchError("matrix has no finite entries")
    lo, hi = float(finite.min()), float(finite.max())
    if hi - lo <= 0:
        scaled = np.full_like(m, 128.0)
    else:
        scaled = (m - lo) / (hi - lo) * 255.0
    scaled = np.where(np.isnan(m), 255.0, scaled)
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    pixels = np.kron(pixels, np.ones((cell, cell), dtype=np.uint8))
    Image.fromarray(pixels, mode="L").save(png_path)

    csv_path = Path(csv_path) if csv_path is not None else Path(png_path).with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([""] + list(labels))
        for label, row in zip(labels, m):
            writer.writerow([label] + ["" if np.isnan(v) else repr(float(v)) for v in row])
