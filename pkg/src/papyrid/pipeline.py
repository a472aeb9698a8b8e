"""End-to-end orchestration with content-hash caching.

Stages: scan, binarize, features, encode, retrieve, classify. Every stage
writes its artifacts plus a stamp file keyed on a hash of its inputs and
parameters; up-to-date stages are skipped unless forced. Reports carry no
timestamps, so identical configurations reproduce byte-identical reports;
wall-clock information goes to run.log only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import imageio, serialization
from .binarize import SauvolaParams, SuParams, binarize
from .classify import NearestNeighborClassifier, evaluate_classification, train_svms
from .corpus import (
    ClassificationSplit,
    Corpus,
    make_classification_split,
    read_manifest,
    scan_corpus,
    write_manifest,
)
from .encode import (
    DOCUMENTS_FILE,
    GLOBAL_DESCRIPTOR_FILE,
    EncodingConfig,
    GlobalDescriptor,
    encode_corpus,
    fit_encoder,
    save_encoder,
)
from .errors import InputError, UnknownMethodError
from .features import (
    ScaleSpaceParams,
    apply_descriptor_transform,
    extract_document,
    fit_descriptor_transform,
    keypoint_array,
)
from .retrieval import export_heatmap, leave_one_out, scribe_similarity

CACHE_ENV_VAR = "PAPYRID_CACHE"
BINARIZE_METHODS = ("none", "otsu", "sauvola", "su", "external")
TRANSFORM_FIT_CAP = 200_000  # descriptor subsample for the 128 -> 64 whitening fit
STAMP_NAME = "stage.json"
SNAPSHOT_NAME = "config.snapshot"


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: str = ""
    manifest: str = ""
    workdir: str = "papyrid_work"
    binarize_method: str = "su"
    mask_dir: str = ""
    su_window: int = 9
    su_min_hc: int = 9
    su_eps: float = 1e-8
    sauvola_window: int = 31
    sauvola_k: float = 0.2
    sauvola_r: float = 128.0
    feature_mode: str = "rsift"
    upright: bool = False
    downsample: int = 2
    codebooks: int = 5
    k: int = 100
    gamma: float = 1000.0
    alpha: float = 0.5
    pool: str = "gmp"
    pca_dim: int = 0  # 0 means the rank bound
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    split_seed: int = 0
    split_mode: str = "first-two"
    classifier: str = "svm"
    svm_c: float = 1.0
    jobs: int = 1

    def __post_init__(self):
        if self.binarize_method not in BINARIZE_METHODS:
            raise UnknownMethodError(
                f"binarize_method {self.binarize_method!r}; expected one of {BINARIZE_METHODS}"
            )
        if self.binarize_method == "external" and not self.mask_dir:
            raise InputError("binarize_method external requires mask_dir")
        if self.feature_mode == "rsift" and self.binarize_method == "none":
            raise InputError("feature_mode rsift needs a binarization method for the ink mask")

    def to_text(self) -> str:
        lines = ["# papyr-id pipeline configuration"]
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "seeds":
                value = ",".join(str(s) for s in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @staticmethod
    def parse(text: str) -> "PipelineConfig":
        known = {f.name: f for f in fields(PipelineConfig)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"config line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known:
                raise InputError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(known[key].type, value)
        return PipelineConfig(**values)

    @staticmethod
    def load(path: str | Path) -> "PipelineConfig":
        return PipelineConfig.parse(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, overrides: dict[str, str]) -> "PipelineConfig":
        known = {f.name: f for f in fields(PipelineConfig)}
        parsed = {}
        for key, value in overrides.items():
            if key not in known:
                raise InputError(f"unknown config key {key!r}")
            parsed[key] = _parse_value(known[key].type, value)
        return replace(self, **parsed)


def _parse_value(type_name, value: str):
    name = type_name if isinstance(type_name, str) else getattr(type_name, "__name__", str(type_name))
    if "tuple" in name:
        return tuple(int(v) for v in value.split(",") if v.strip())
    if name == "bool":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise InputError(f"expected a boolean, got {value!r}")
    if name == "int":
        return int(value)
    if name == "float":
        return float(value)
    return value


def _sha256(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


def _hash_files(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _hash_params(params: dict) -> str:
    return _sha256(json.dumps(params, sort_keys=True).encode())


class _Stage:
    """Stamp-and-snapshot bookkeeping for one cached pipeline stage."""

    def __init__(self, directory: Path, input_hash: str, config: PipelineConfig):
        self.directory = directory
        self.input_hash = input_hash
        self.config = config

    def is_current(self, outputs: list[Path], force: bool) -> bool:
        if force:
            return False
        stamp = self.directory / STAMP_NAME
        if not stamp.exists():
            return False
        try:
            recorded = json.loads(stamp.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return False
        return recorded.get("hash") == self.input_hash and all(p.exists() for p in outputs)

    def commit(self, outputs: list[Path]) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / SNAPSHOT_NAME).write_text(self.config.to_text(), encoding="utf-8")
        (self.directory / STAMP_NAME).write_text(
            json.dumps({"hash": self.input_hash, "outputs": [p.name for p in outputs]}, indent=2)
            + "\n",
            encoding="utf-8",
        )


def effective_workdir(config: PipelineConfig) -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else Path(config.workdir)


def _binarize_one(args) -> None:
    image_path, mask_out, method, su_params, sauvola_params, external_path = args
    image = imageio.load_grayscale(image_path)
    mask = binarize(
        image,
        method,
        su=su_params,
        sauvola_params=sauvola_params,
        mask_path=external_path,
    )
    imageio.save_mask(mask, mask_out)


def _features_one(args):
    image_path, mask_path, mode, params = args
    image = imageio.load_grayscale(image_path)
    mask = imageio.load_mask(mask_path, expect_shape=image.shape) if mask_path else None
    descs, kps = extract_document(image, mask=mask, mode=mode, params=params)
    return descs.astype(np.float32), keypoint_array(kps)


def _run_tasks(func, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


@dataclass
class PipelineResult:
    workdir: Path
    manifest: Path
    split: Path
    report: Path
    classification_report: Path
    stages_run: list[str]
    stages_skipped: list[str]


def run_pipeline(config: PipelineConfig, force: bool = False) -> PipelineResult:
    workdir = effective_workdir(config)
    workdir.mkdir(parents=True, exist_ok=True)
    log_path = workdir / "run.log"
    config_hash = _hash_params({"config": config.to_text()})
    run_order: list[str] = []
    skipped: list[str] = []

    def log(stage: str, status: str, seconds: float) -> None:
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(f"{stamp} config={config_hash[:12]} stage={stage} status={status} seconds={seconds:.2f}\n")

    def execute(stage: str, stage_dir: Path, input_hash: str, outputs: list[Path], fn) -> None:
        guard = _Stage(stage_dir, input_hash, config)
        if guard.is_current(outputs, force):
            skipped.append(stage)
            log(stage, "skip", 0.0)
            return
        start = time.perf_counter()
        stage_dir.mkdir(parents=True, exist_ok=True)
        fn()
        guard.commit(outputs)
        run_order.append(stage)
        log(stage, "run", time.perf_counter() - start)

    # --- scan ---------------------------------------------------------
    manifest_path = workdir / "manifest.csv"
    split_path = workdir / "split.json"
    if config.manifest:
        corpus = read_manifest(config.manifest)
        input_files = [r.path for r in corpus.records]
    else:
        if not config.input_dir:
            raise InputError("config needs input_dir or manifest")
        corpus = scan_corpus(config.input_dir)
        input_files = [r.path for r in corpus.records]
    images_hash = _hash_files(input_files)

    scan_hash = _sha256(
        images_hash.encode(),
        _hash_params({"split_seed": config.split_seed, "split_mode": config.split_mode}).encode(),
    )

    def do_scan():
        write_manifest(corpus, manifest_path)
        make_classification_split(corpus, seed=config.split_seed, mode=config.split_mode).save(split_path)

    execute("scan", workdir, scan_hash, [manifest_path, split_path], do_scan)
    split = ClassificationSplit.load(split_path)

    # --- binarize -----------------------------------------------------
    masks_dir = workdir / "masks"
    mask_paths = {r.doc_id: masks_dir / f"{r.doc_id}.png" for r in corpus.records}
    if config.binarize_method != "none":
        su_params = SuParams(contrast_eps=config.su_eps, window=config.su_window, min_high_contrast=config.su_min_hc)
        sauvola_params = SauvolaParams(window=config.sauvola_window, k=config.sauvola_k, r=config.sauvola_r)
        if config.binarize_method == "external":
            # Key the stage on the supplied mask contents, not just the path.
            upstream_masks = _hash_files(
                [Path(config.mask_dir) / f"{r.doc_id}.png" for r in corpus.records]
            )
        else:
            upstream_masks = ""
        binarize_hash = _sha256(
            images_hash.encode(),
            upstream_masks.encode(),
            _hash_params(
                {
                    "method": config.binarize_method,
                    "su": [config.su_eps, config.su_window, config.su_min_hc],
                    "sauvola": [config.sauvola_window, config.sauvola_k, config.sauvola_r],
                }
            ).encode(),
        )

        def do_binarize():
            tasks = []
            for r in corpus.records:
                external = Path(config.mask_dir) / f"{r.doc_id}.png" if config.binarize_method == "external" else None
                tasks.append((r.path, mask_paths[r.doc_id], config.binarize_method, su_params, sauvola_params, external))
            _run_tasks(_binarize_one, tasks, config.jobs)

        execute("binarize", masks_dir, binarize_hash, list(mask_paths.values()), do_binarize)
        upstream_hash = binarize_hash
    else:
        upstream_hash = images_hash

    # --- features -----------------------------------------------------
    feats_dir = workdir / "feats"
    feat_paths = {r.doc_id: feats_dir / f"{r.doc_id}.pwid" for r in corpus.records}
    transform_path = feats_dir / "transform.pwmd"
    ss_params = ScaleSpaceParams(
        downsample_factor=config.downsample,
        upright=config.upright,
    )
    features_hash = _sha256(
        upstream_hash.encode(),
        _hash_params(
            {
                "mode": config.feature_mode,
                "upright": config.upright,
                "downsample": config.downsample,
                "fit_cap": TRANSFORM_FIT_CAP,
            }
        ).encode(),
    )

    def do_features():
        use_masks = config.binarize_method != "none"
        tasks = [
            (r.path, mask_paths[r.doc_id] if use_masks else None, config.feature_mode, ss_params)
            for r in corpus.records
        ]
        results = _run_tasks(_features_one, tasks, config.jobs)
        nonempty = [d for d, _ in results if d.shape[0]]
        if not nonempty:
            raise InputError("no document produced any descriptors; check masks and feature mode")
        pooled = np.concatenate(nonempty, axis=0).astype(np.float64)
        if pooled.shape[0] > TRANSFORM_FIT_CAP:
            rng = np.random.default_rng(0)
            idx = np.sort(rng.choice(pooled.shape[0], size=TRANSFORM_FIT_CAP, replace=False))
            pooled = pooled[idx]
        transform = fit_descriptor_transform(pooled)
        serialization.save_pca(transform.pca, transform_path)
        for r, (descs, kps) in zip(corpus.records, results):
            if descs.shape[0]:
                reduced = apply_descriptor_transform(transform, descs.astype(np.float64))
            else:
                reduced = np.zeros((0, transform.pca.out_dim))
            serialization.save_descriptors(feat_paths[r.doc_id], reduced.astype(np.float32), kps)

    execute("features", feats_dir, features_hash, list(feat_paths.values()) + [transform_path], do_features)

    # --- encode -------------------------------------------------------
    enc_dir = workdir / "enc"
    encoding_config = EncodingConfig(
        n_codebooks=config.codebooks,
        k=config.k,
        gamma=config.gamma,
        power_alpha=config.alpha,
        pool=config.pool,
        seeds=tuple(config.seeds[: config.codebooks]),
        pca_dim=config.pca_dim or None,
    )
    encode_hash = _sha256(features_hash.encode(), _hash_params(encoding_config.to_json_dict()).encode())
    enc_outputs = [enc_dir / GLOBAL_DESCRIPTOR_FILE, enc_dir / DOCUMENTS_FILE, enc_dir / "config.json"]

    def do_encode():
        per_doc = [serialization.load_descriptors(feat_paths[r.doc_id])[0].astype(np.float64) for r in corpus.records]
        encoder = fit_encoder(per_doc, encoding_config)
        globals_ = encode_corpus(encoder, per_doc, corpus.doc_ids)
        save_encoder(encoder, enc_dir)
        write_global_descriptors(enc_dir, globals_, corpus)

    execute("encode", enc_dir, encode_hash, enc_outputs, do_encode)

    # --- retrieve -----------------------------------------------------
    retrieve_dir = workdir / "retrieve"
    report_path = retrieve_dir / "report.json"
    heatmap_doc = retrieve_dir / "heatmap_doc.png"
    heatmap_scribe = retrieve_dir / "heatmap_scribe.png"
    retrieve_hash = _sha256(encode_hash.encode(), b"retrieve-v1")

    def do_retrieve():
        globals_, labels = read_global_descriptors(enc_dir)
        run_retrieval(globals_, labels, report_path, heatmap_doc, heatmap_scribe)

    execute("retrieve", retrieve_dir, retrieve_hash, [report_path, heatmap_doc, heatmap_scribe], do_retrieve)

    # --- classify -----------------------------------------------------
    classify_dir = workdir / "classify"
    cls_path = classify_dir / "cls.json"
    confusion_path = classify_dir / "confusion.csv"
    classify_hash = _sha256(
        encode_hash.encode(),
        scan_hash.encode(),
        _hash_params({"classifier": config.classifier, "svm_c": config.svm_c}).encode(),
    )

    def do_classify():
        globals_, labels = read_global_descriptors(enc_dir)
        run_classification(globals_, labels, split, config.classifier, config.svm_c, cls_path, confusion_path)

    execute("classify", classify_dir, classify_hash, [cls_path, confusion_path], do_classify)

    return PipelineResult(
        workdir=workdir,
        manifest=manifest_path,
        split=split_path,
        report=report_path,
        classification_report=cls_path,
        stages_run=run_order,
        stages_skipped=skipped,
    )


def write_global_descriptors(enc_dir: Path, globals_: list[GlobalDescriptor], corpus: Corpus) -> None:
    matrix = np.stack([g.vector for g in globals_])
    serialization.save_matrix(matrix, enc_dir / GLOBAL_DESCRIPTOR_FILE)
    with open(enc_dir / DOCUMENTS_FILE, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doc_id", "writer", "empty"])
        for g, record in zip(globals_, corpus.records):
            writer.writerow([g.doc_id, record.writer, int(g.empty)])


def read_global_descriptors(enc_dir: str | Path) -> tuple[list[GlobalDescriptor], list[str]]:
    enc_dir = Path(enc_dir)
    matrix = serialization.load_matrix(enc_dir / GLOBAL_DESCRIPTOR_FILE)
    globals_: list[GlobalDescriptor] = []
    labels: list[str] = []
    with open(enc_dir / DOCUMENTS_FILE, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["doc_id", "writer", "empty"]:
            raise InputError(f"bad documents file header: {header}")
        for i, row in enumerate(reader):
            doc_id, writer, empty = row
            globals_.append(GlobalDescriptor(vector=matrix[i], doc_id=doc_id, empty=empty == "1"))
            labels.append(writer)
    if len(globals_) != matrix.shape[0]:
        raise InputError("documents file does not match the descriptor matrix")
    return globals_, labels


def run_retrieval(
    globals_: list[GlobalDescriptor],
    labels: list[str],
    report_path: Path,
    heatmap_doc: Path | None = None,
    heatmap_scribe: Path | None = None,
) -> None:
    report, dm = leave_one_out(globals_, labels)
    report_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if heatmap_doc is not None:
        export_heatmap(dm, [g.doc_id for g in globals_], heatmap_doc)
    if heatmap_scribe is not None:
        matrix, writers, _ = scribe_similarity(dm, labels)
        export_heatmap(matrix, writers, heatmap_scribe)


def run_classification(
    globals_: list[GlobalDescriptor],
    labels: list[str],
    split: ClassificationSplit,
    classifier: str,
    svm_c: float,
    report_path: Path,
    confusion_path: Path,
) -> None:
    by_id = {g.doc_id: (g, label) for g, label in zip(globals_, labels)}
    missing = [d for d in split.train + split.test if d not in by_id]
    if missing:
        raise InputError(f"split names unknown documents: {missing[:5]}")
    train = [by_id[d][0] for d in split.train]
    train_labels = [by_id[d][1] for d in split.train]
    true_labels = {d: by_id[d][1] for d in split.train + split.test}

    class_weights = None
    if classifier == "nn":
        model = NearestNeighborClassifier.fit(train, train_labels)
    elif classifier == "svm":
        model = train_svms(train, train_labels, c=svm_c)
        class_weights = model.class_weights
    else:
        raise UnknownMethodError(f"classifier {classifier!r}; expected nn or svm")

    predictions = {d: model.rank(by_id[d][0].vector) for d in split.test}
    report = evaluate_classification(split, predictions, true_labels)
    report.classifier = classifier
    report.class_weights = class_weights
    report_path.write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    report.confusion.write_csv(confusion_path)
