"""Corpus discovery: writer labels from filenames, manifests, evaluation splits.

Document ids are filename stems of the form ``<writer>_<number>``; ordering is
plain byte-lexicographic on the id, so ``Victor_10`` sorts before ``Victor_2``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import EmptyCorpusError, InputError, InsufficientSamplesError, MalformedNameError

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".tif", ".tiff"}

MANIFEST_HEADER = ["doc_id", "writer", "path", "width", "height"]

SPLIT_MODES = ("first-two", "random")
TRAIN_PER_WRITER = 2


def parse_writer_label(filename: str) -> str:
    """Writer label: the stem with its final ``_<digits>`` suffix removed."""
    stem = Path(filename).stem
    head, sep, tail = stem.rpartition("_")
    if not sep or not head or not tail.isdigit():
        raise MalformedNameError(
            f"cannot derive a writer from {filename!r}: expected '<writer>_<digits>'"
        )
    return head


@dataclass(frozen=True)
class DocumentRecord:
    path: Path
    doc_id: str
    writer: str
    image_size: tuple[int, int]  # (width, height)


@dataclass
class Corpus:
    records: list[DocumentRecord]
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def doc_ids(self) -> list[str]:
        return [r.doc_id for r in self.records]

    @property
    def labels(self) -> list[str]:
        return [r.writer for r in self.records]

    def writers(self) -> list[str]:
        """Writer names in first-occurrence order over the sorted records."""
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.writer, None)
        return list(seen)

    def by_writer(self) -> dict[str, list[DocumentRecord]]:
        out: dict[str, list[DocumentRecord]] = {}
        for r in self.records:
            out.setdefault(r.writer, []).append(r)
        return out

    def record(self, doc_id: str) -> DocumentRecord:
        for r in self.records:
            if r.doc_id == doc_id:
                return r
        raise KeyError(doc_id)


def scan_corpus(directory: str | Path) -> Corpus:
    """Collect every parseable image under ``directory`` (non-recursive)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyCorpusError(f"not a directory: {directory}")

    records: list[DocumentRecord] = []
    warnings: list[str] = []
    for path in sorted(directory.iterdir()):
        if not path.is_file():
            continue
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            warnings.append(f"skipped non-image file: {path.name}")
            continue
        try:
            writer = parse_writer_label(path.name)
        except MalformedNameError:
            warnings.append(f"skipped unparseable name: {path.name}")
            continue
        try:
            with Image.open(path) as im:
                size = im.size
        except (UnidentifiedImageError, OSError):
            warnings.append(f"skipped unreadable image: {path.name}")
            continue
        records.append(DocumentRecord(path=path, doc_id=path.stem, writer=writer, image_size=size))

    if not records:
        raise EmptyCorpusError(f"no usable images in {directory}")
    records.sort(key=lambda r: r.doc_id)
    ids = [r.doc_id for r in records]
    if len(set(ids)) != len(ids):
        dupes = sorted({d for d in ids if ids.count(d) > 1})
        raise InputError(f"duplicate doc ids across extensions: {dupes}")
    return Corpus(records=records, warnings=warnings)


def write_manifest(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in corpus.records:
            writer.writerow([r.doc_id, r.writer, str(r.path), r.image_size[0], r.image_size[1]])


def read_manifest(path: str | Path) -> Corpus:
    path = Path(path)
    records: list[DocumentRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise EmptyCorpusError(f"bad manifest header in {path}: {header}")
        for row in reader:
            if not row:
                continue
            doc_id, writer, p, w, h = row
            records.append(
                DocumentRecord(path=Path(p), doc_id=doc_id, writer=writer, image_size=(int(w), int(h)))
            )
    if not records:
        raise EmptyCorpusError(f"manifest {path} lists no documents")
    records.sort(key=lambda r: r.doc_id)
    return Corpus(records=records)


@dataclass(frozen=True)
class ClassificationSplit:
    train: list[str]
    test: list[str]
    seed: int
    mode: str = "first-two"

    def to_json_dict(self) -> dict:
        return {"train": list(self.train), "test": list(self.test), "seed": self.seed, "mode": self.mode}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "ClassificationSplit":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return ClassificationSplit(train=list(d["train"]), test=list(d["test"]), seed=int(d["seed"]), mode=d.get("mode", "first-two"))


def make_classification_split(corpus: Corpus, seed: int = 0, mode: str = "first-two") -> ClassificationSplit:
    """Pick two training documents per writer; everything else is test.

    Mode ``first-two`` takes the lexicographically first two ids per writer;
    ``random`` samples two per writer from a generator seeded with ``seed``.
    """
    if mode not in SPLIT_MODES:
        raise InputError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")
    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    for writer, recs in sorted(corpus.by_writer().items()):
        ids = [r.doc_id for r in recs]
        if len(ids) < TRAIN_PER_WRITER + 1:
            raise InsufficientSamplesError(
                f"writer {writer!r} has {len(ids)} documents; need at least {TRAIN_PER_WRITER + 1}"
            )
        if mode == "first-two":
            chosen = ids[:TRAIN_PER_WRITER]
        else:
            idx = rng.choice(len(ids), size=TRAIN_PER_WRITER, replace=False)
            chosen = [ids[i] for i in sorted(idx)]
        train.extend(chosen)
        test.extend(i for i in ids if i not in chosen)
    return ClassificationSplit(train=sorted(train), test=sorted(test), seed=seed, mode=mode)
