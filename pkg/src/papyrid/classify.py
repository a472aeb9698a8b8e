"""Writer classification: nearest neighbor and one-vs-rest linear SVMs.

Each writer gets a hinge-loss SVM with balanced class weights
n_total / (2 * n_class), trained by cyclic dual coordinate descent until the
duality gap closes. The bias is learned as an extra, regularized feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ClassificationSplit
from .encode import GlobalDescriptor
from .errors import (
    ConvergenceError,
    EmptyTrainSetError,
    InputError,
    MissingPredictionError,
    SingleClassError,
)
from .retrieval import cosine_distance

SVM_MAX_EPOCHS = 10000
SVM_GAP_TOL = 1e-6


def _rank_writers(scores: dict[str, float], descending: bool) -> list[str]:
    """Writers best-first; ties resolved by writer name."""
    sign = -1.0 if descending else 1.0
    return [w for w, _ in sorted(scores.items(), key=lambda kv: (sign * kv[1], kv[0]))]


@dataclass
class NearestNeighborClassifier:
    doc_ids: list[str]
    labels: list[str]
    vectors: np.ndarray  # (n, d)

    @staticmethod
    def fit(train: list[GlobalDescriptor], labels: list[str]) -> "NearestNeighborClassifier":
        if not train:
            raise EmptyTrainSetError("no training descriptors")
        order = sorted(range(len(train)), key=lambda i: train[i].doc_id)
        return NearestNeighborClassifier(
            doc_ids=[train[i].doc_id for i in order],
            labels=[labels[i] for i in order],
            vectors=np.stack([train[i].vector for i in order]),
        )

    def rank(self, x: np.ndarray) -> list[str]:
        """Writers ordered by the distance of their nearest training sample."""
        dists = [cosine_distance(v, x) for v in self.vectors]
        best: dict[str, float] = {}
        for label, dist in zip(self.labels, dists):
            if label not in best or dist < best[label]:
                best[label] = dist
        return _rank_writers(best, descending=False)

    def classify(self, x: np.ndarray) -> str:
        # Nearest single sample; doc id order breaks exact ties.
        dists = np.asarray([cosine_distance(v, x) for v in self.vectors])
        return self.labels[int(np.argmin(dists))]


def nn_classify(train: list[GlobalDescriptor], labels: list[str], x: np.ndarray) -> str:
    return NearestNeighborClassifier.fit(train, labels).classify(x)


def _dual_cd_svm(
    x: np.ndarray,
    y: np.ndarray,
    c_per_sample: np.ndarray,
    tol: float,
    max_epochs: int,
) -> np.ndarray:
    """Weighted L1-hinge SVM by cyclic dual coordinate descent.

    Solves min_w 0.5 ||w||^2 + sum_i C_i max(0, 1 - y_i w.x_i) and stops when
    the absolute duality gap falls below tol.
    """
    n, d = x.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    q = np.einsum("ij,ij->i", x, x)
    for _ in range(max_epochs):
        for i in range(n):
            if q[i] == 0:
                continue
            g = y[i] * (w @ x[i]) - 1.0
            new_alpha = min(max(alpha[i] - g / q[i], 0.0), c_per_sample[i])
            delta = new_alpha - alpha[i]
            if delta != 0.0:
                w += delta * y[i] * x[i]
                alpha[i] = new_alpha
        margins = 1.0 - y * (x @ w)
        primal = 0.5 * (w @ w) + float(np.sum(c_per_sample * np.maximum(margins, 0.0)))
        dual = float(np.sum(alpha)) - 0.5 * (w @ w)
        if primal - dual <= tol:
            return w
    raise ConvergenceError(f"SVM duality gap above {tol} after {max_epochs} epochs")


@dataclass
class SvmModel:
    writers: list[str]
    weights: np.ndarray  # (n_writers, d)
    biases: np.ndarray  # (n_writers,)
    c: float
    class_weights: dict[str, tuple[float, float]] = field(default_factory=dict)

    def decision_values(self, x: np.ndarray) -> dict[str, float]:
        scores = self.weights @ np.asarray(x, dtype=np.float64) + self.biases
        return {w: float(s) for w, s in zip(self.writers, scores)}

    def rank(self, x: np.ndarray) -> list[str]:
        return _rank_writers(self.decision_values(x), descending=True)

    def classify(self, x: np.ndarray) -> str:
        return self.rank(x)[0]


def train_svms(
    train: list[GlobalDescriptor],
    labels: list[str],
    c: float = 1.0,
    tol: float = SVM_GAP_TOL,
    max_epochs: int = SVM_MAX_EPOCHS,
) -> SvmModel:
    """One linear SVM per writer, positives vs all other training samples."""
    if not train:
        raise EmptyTrainSetError("no training descriptors")
    writers = sorted(set(labels))
    if len(writers) < 2:
        raise SingleClassError("need at least two writers to train")
    x = np.stack([t.vector for t in train]).astype(np.float64)
    # Bias handled as an appended constant feature (regularized like w).
    x = np.hstack([x, np.ones((x.shape[0], 1))])
    label_arr = np.asarray(labels)
    n_total = len(train)

    weights = np.zeros((len(writers), x.shape[1] - 1))
    biases = np.zeros(len(writers))
    class_weights: dict[str, tuple[float, float]] = {}
    for row, writer in enumerate(writers):
        pos = label_arr == writer
        n_pos = int(pos.sum())
        n_neg = n_total - n_pos
        if n_neg == 0:
            raise SingleClassError(f"writer {writer!r} owns the whole training set")
        w_pos = n_total / (2.0 * n_pos)
        w_neg = n_total / (2.0 * n_neg)
        class_weights[writer] = (w_pos, w_neg)
        y = np.where(pos, 1.0, -1.0)
        c_i = c * np.where(pos, w_pos, w_neg)
        w_aug = _dual_cd_svm(x, y, c_i, tol, max_epochs)
        weights[row] = w_aug[:-1]
        biases[row] = w_aug[-1]
    return SvmModel(writers=writers, weights=weights, biases=biases, c=c, class_weights=class_weights)


def svm_classify(model: SvmModel, x: np.ndarray) -> str:
    return model.classify(x)


@dataclass
class ConfusionMatrix:
    writers: list[str]  # alphabetical; rows true, columns predicted
    counts: np.ndarray  # (w, w) int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.writers)
            for name, row in zip(self.writers, self.counts):
                writer.writerow([name] + [int(v) for v in row])


@dataclass
class ClassificationReport:
    top1: float  # percentages
    top5: float
    confusion: ConfusionMatrix
    per_doc: list[dict]
    classifier: str = ""
    class_weights: dict[str, tuple[float, float]] | None = None

    def to_json_dict(self) -> dict:
        d = {
            "classifier": self.classifier,
            "top1": round(self.top1, 1),
            "top5": round(self.top5, 1),
            "per_doc": self.per_doc,
        }
        if self.class_weights is not None:
            d["class_weighting"] = "n_total / (2 * n_class)"
            d["class_weights"] = {w: list(v) for w, v in self.class_weights.items()}
        return d


def evaluate_classification(
    split: ClassificationSplit,
    predictions: dict[str, list[str]],
    true_labels: dict[str, str],
) -> ClassificationReport:
    """Score ranked writer predictions for every test document.

    ``predictions`` maps doc_id to a best-first writer ranking; Top-5 counts
    the true writer anywhere in the first five entries.
    """
    writers = sorted(set(true_labels.values()))
    index = {w: i for i, w in enumerate(writers)}
    counts = np.zeros((len(writers), len(writers)), dtype=np.int64)
    top1 = top5 = 0
    per_doc: list[dict] = []
    for doc_id in split.test:
        if doc_id not in predictions:
            raise MissingPredictionError(f"no prediction for test document {doc_id!r}")
        ranked = predictions[doc_id]
        truth = true_labels[doc_id]
        predicted = ranked[0]
        if predicted not in index:
            raise InputError(f"prediction for {doc_id!r} names unknown writer {predicted!r}")
        rank_of_true = ranked.index(truth) + 1 if truth in ranked else None
        top1 += predicted == truth
        top5 += rank_of_true is not None and rank_of_true <= 5
        counts[index[truth], index[predicted]] += 1
        per_doc.append(
            {"doc_id": doc_id, "true": truth, "predicted": predicted, "rank_of_true": rank_of_true}
        )
    n = len(split.test)
    return ClassificationReport(
        top1=100.0 * top1 / n,
        top5=100.0 * top5 / n,
        confusion=ConfusionMatrix(writers=writers, counts=counts),
        per_doc=per_doc,
    )
