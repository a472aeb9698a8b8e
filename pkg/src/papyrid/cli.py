"""papyr-id command line interface.

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import serialization
from .binarize import SauvolaParams, SuParams
from .corpus import ClassificationSplit, make_classification_split, read_manifest, scan_corpus, write_manifest
from .encode import EncodingConfig, encode_corpus, fit_encoder, save_encoder
from .errors import InputError, NumericalError, PapyridError
from .features import ScaleSpaceParams, apply_descriptor_transform, fit_descriptor_transform
from .pipeline import (
    TRANSFORM_FIT_CAP,
    PipelineConfig,
    _binarize_one,
    _features_one,
    _run_tasks,
    read_global_descriptors,
    run_classification,
    run_pipeline,
    run_retrieval,
    write_global_descriptors,
)


def _cmd_scan(args) -> int:
    corpus = scan_corpus(args.directory)
    for warning in corpus.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    write_manifest(corpus, args.manifest)
    print(f"manifest: {args.manifest} ({len(corpus)} documents, {len(corpus.writers())} writers)")
    if args.split_seed is not None or args.split_mode is not None or args.split_out:
        mode = args.split_mode or "first-two"
        split = make_classification_split(corpus, seed=args.split_seed or 0, mode=mode)
        out = Path(args.split_out) if args.split_out else Path(args.manifest).parent / "split.json"
        split.save(out)
        print(f"split: {out} ({len(split.train)} train / {len(split.test)} test)")
    return 0


def _cmd_binarize(args) -> int:
    if args.method == "external" and not args.mask_dir:
        raise InputError("--method external requires --mask-dir")
    corpus = read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    su = SuParams(window=args.su_window, min_high_contrast=args.su_min_hc)
    sauvola = SauvolaParams(window=args.sauvola_window, k=args.sauvola_k)
    tasks = []
    for record in corpus.records:
        external = Path(args.mask_dir) / f"{record.doc_id}.png" if args.method == "external" else None
        tasks.append((record.path, out_dir / f"{record.doc_id}.png", args.method, su, sauvola, external))
    _run_tasks(_binarize_one, tasks, args.jobs)
    print(f"masks: {out_dir} ({len(tasks)} files, method={args.method})")
    return 0


def _cmd_features(args) -> int:
    corpus = read_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = ScaleSpaceParams(
        downsample_factor=1 if args.no_downsample else 2,
        upright=args.upright,
    )
    tasks = []
    for record in corpus.records:
        mask = Path(args.masks) / f"{record.doc_id}.png" if args.masks else None
        tasks.append((record.path, mask, args.mode, params))
    results = _run_tasks(_features_one, tasks, args.jobs)

    nonempty = [d for d, _ in results if d.shape[0]]
    if not nonempty:
        raise InputError("no document produced any descriptors; check masks and feature mode")
    pooled = np.concatenate(nonempty, axis=0).astype(np.float64)
    if pooled.shape[0] > TRANSFORM_FIT_CAP:
        rng = np.random.default_rng(0)
        pooled = pooled[np.sort(rng.choice(pooled.shape[0], size=TRANSFORM_FIT_CAP, replace=False))]
    transform = fit_descriptor_transform(pooled)
    serialization.save_pca(transform.pca, out_dir / "transform.pwmd")
    total = 0
    for record, (descs, kps) in zip(corpus.records, results):
        if descs.shape[0]:
            reduced = apply_descriptor_transform(transform, descs.astype(np.float64))
        else:
            reduced = np.zeros((0, transform.pca.out_dim))
        serialization.save_descriptors(out_dir / f"{record.doc_id}.pwid", reduced.astype(np.float32), kps)
        total += descs.shape[0]
    print(f"features: {out_dir} ({total} descriptors over {len(corpus)} documents, mode={args.mode})")
    return 0


def _cmd_encode(args) -> int:
    corpus = read_manifest(args.manifest)
    feats = Path(args.feats)
    per_doc = [
        serialization.load_descriptors(feats / f"{r.doc_id}.pwid")[0].astype(np.float64)
        for r in corpus.records
    ]
    config = EncodingConfig(
        n_codebooks=args.codebooks,
        k=args.k,
        gamma=args.gamma,
        power_alpha=args.alpha,
        pool=args.pool,
        seeds=tuple(range(1, args.codebooks + 1)),
        pca_dim=args.pca_dim or None,
    )
    if args.fit_on == "train":
        if not args.split:
            raise InputError("--fit-on train requires --split")
        split = ClassificationSplit.load(args.split)
        train_ids = set(split.train)
        fit_docs = [d for d, r in zip(per_doc, corpus.records) if r.doc_id in train_ids]
    else:
        fit_docs = per_doc
    encoder = fit_encoder(fit_docs, config)
    globals_ = encode_corpus(encoder, per_doc, corpus.doc_ids)
    out = Path(args.out)
    save_encoder(encoder, out)
    write_global_descriptors(out, globals_, corpus)
    print(f"encoder: {out} (dim {globals_[0].vector.shape[0]}, pool={args.pool})")
    return 0


def _cmd_retrieve(args) -> int:
    globals_, labels = read_global_descriptors(args.enc)
    run_retrieval(
        globals_,
        labels,
        Path(args.report),
        Path(args.heatmap_doc) if args.heatmap_doc else None,
        Path(args.heatmap_scribe) if args.heatmap_scribe else None,
    )
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    print(
        f"retrieval: top1={report['top1']} top5={report['top5']} "
        f"top10={report['top10']} map={report['map']}"
    )
    return 0


def _cmd_classify(args) -> int:
    globals_, labels = read_global_descriptors(args.enc)
    split = ClassificationSplit.load(args.split)
    run_classification(
        globals_, labels, split, args.classifier, args.svm_c, Path(args.report), Path(args.confusion)
    )
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    print(f"classification ({args.classifier}): top1={report['top1']} top5={report['top5']}")
    return 0


def _cmd_run(args) -> int:
    config = PipelineConfig.load(args.config)
    overrides = {}
    for kv in args.set or []:
        if "=" not in kv:
            raise InputError(f"--set expects KEY=VALUE, got {kv!r}")
        key, _, value = kv.partition("=")
        overrides[key.strip()] = value.strip()
    if args.workdir:
        overrides["workdir"] = args.workdir
    if args.jobs is not None:
        overrides["jobs"] = str(args.jobs)
    if overrides:
        config = config.with_overrides(overrides)
    result = run_pipeline(config, force=args.force)
    print(f"workdir: {result.workdir}")
    print(f"stages run: {', '.join(result.stages_run) or 'none'}")
    print(f"stages skipped: {', '.join(result.stages_skipped) or 'none'}")
    report = json.loads(result.report.read_text(encoding="utf-8"))
    print(
        f"retrieval: top1={report['top1']} top5={report['top5']} "
        f"top10={report['top10']} map={report['map']}"
    )
    cls = json.loads(result.classification_report.read_text(encoding="utf-8"))
    print(f"classification ({cls['classifier']}): top1={cls['top1']} top5={cls['top5']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="papyr-id",
        description="Writer retrieval and classification for historical document images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="discover images and write a manifest")
    p.add_argument("directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--split-mode", choices=["first-two", "random"], default=None)
    p.add_argument("--split-out", default=None)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("binarize", help="write ink masks for every manifest document")
    p.add_argument("manifest")
    p.add_argument("--method", choices=["su", "otsu", "sauvola", "external"], required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mask-dir", default=None, help="precomputed masks for method external")
    p.add_argument("--su-window", type=int, default=9)
    p.add_argument("--su-min-hc", type=int, default=9)
    p.add_argument("--sauvola-window", type=int, default=31)
    p.add_argument("--sauvola-k", type=float, default=0.2)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_binarize)

    p = sub.add_parser("features", help="extract normalized 64-D local descriptors")
    p.add_argument("manifest")
    p.add_argument("--masks", default=None)
    p.add_argument("--mode", choices=["sift", "rsift"], default="sift")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--upright", action="store_true")
    p.add_argument("--no-downsample", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("encode", help="fit codebooks and compute global descriptors")
    p.add_argument("manifest")
    p.add_argument("--feats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--codebooks", type=int, default=5)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--gamma", type=float, default=1000.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--pool", choices=["gmp", "sum"], default="gmp")
    p.add_argument("--pca-dim", type=int, default=0, help="0 keeps the rank bound")
    p.add_argument("--fit-on", choices=["all", "train"], default="all")
    p.add_argument("--split", default=None, help="split file, needed with --fit-on train")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("retrieve", help="leave-one-image-out retrieval evaluation")
    p.add_argument("--enc", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--heatmap-doc", default=None)
    p.add_argument("--heatmap-scribe", default=None)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("classify", help="writer classification on a train/test split")
    p.add_argument("--enc", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--classifier", choices=["nn", "svm"], default="svm")
    p.add_argument("--svm-c", type=float, default=1.0)
    p.add_argument("--report", required=True)
    p.add_argument("--confusion", required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("config")
    p.add_argument("--force", action="store_true", help="recompute cached stages")
    p.add_argument("--workdir", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PapyridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
