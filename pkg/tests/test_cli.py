import json

import numpy as np
import pytest
from PIL import Image

from papyrid.cli import main
from papyrid.pipeline import PipelineConfig
from papyrid.synthetic import generate_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("cli_imgs")
    generate_corpus(directory, writers=4, docs_per_writer=3, seed=11, size=320)
    return directory


@pytest.fixture(scope="module")
def staged(tmp_path_factory, corpus_dir):
    """Run scan + binarize + features + encode once; several tests reuse it."""
    root = tmp_path_factory.mktemp("cli_work")
    manifest = root / "manifest.csv"
    assert main(["scan", str(corpus_dir), "--manifest", str(manifest), "--split-seed", "0"]) == 0
    assert main([
        "binarize", str(manifest), "--method", "su", "--out-dir", str(root / "masks"),
    ]) == 0
    assert main([
        "features", str(manifest), "--masks", str(root / "masks"), "--mode", "rsift",
        "--out-dir", str(root / "feats"),
    ]) == 0
    assert main([
        "encode", str(manifest), "--feats", str(root / "feats"), "--out", str(root / "enc"),
        "--codebooks", "2", "--k", "8", "--pca-dim", "6",
    ]) == 0
    return root


class TestScan:
    def test_manifest_and_split(self, corpus_dir, tmp_path):
        manifest = tmp_path / "m.csv"
        code = main(["scan", str(corpus_dir), "--manifest", str(manifest), "--split-seed", "3", "--split-mode", "random"])
        assert code == 0
        lines = manifest.read_text().splitlines()
        assert lines[0] == "doc_id,writer,path,width,height"
        assert len(lines) == 13
        split = json.loads((tmp_path / "split.json").read_text())
        assert len(split["train"]) == 8 and split["seed"] == 3

    def test_missing_dir_exit_code(self, tmp_path, capsys):
        assert main(["scan", str(tmp_path / "none"), "--manifest", str(tmp_path / "m.csv")]) == 1
        assert "error" in capsys.readouterr().err


class TestBinarize:
    def test_masks_written(self, staged, corpus_dir):
        masks = list((staged / "masks").glob("*.png"))
        assert len(masks) == 12
        img = np.asarray(Image.open(masks[0]))
        assert img.dtype == np.uint8
        assert set(np.unique(img)) <= {0, 255}

    def test_external_round_trip(self, staged, tmp_path):
        out = tmp_path / "ext"
        code = main([
            "binarize", str(staged / "manifest.csv"), "--method", "external",
            "--mask-dir", str(staged / "masks"), "--out-dir", str(out),
        ])
        assert code == 0
        name = sorted((staged / "masks").glob("*.png"))[0].name
        a = np.asarray(Image.open(staged / "masks" / name))
        b = np.asarray(Image.open(out / name))
        assert np.array_equal(a, b)


class TestFeatures:
    def test_cache_files(self, staged):
        from papyrid.serialization import load_descriptors

        files = sorted((staged / "feats").glob("*.pwid"))
        assert len(files) == 12
        descs, kps = load_descriptors(files[0])
        assert descs.shape[1] == 64
        assert kps.shape == (descs.shape[0], 4)
        norms = np.linalg.norm(descs.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)
        assert (staged / "feats" / "transform.pwmd").exists()


class TestEncode:
    def test_encoder_directory(self, staged):
        enc = staged / "enc"
        for name in ("codebook_0.pwmd", "codebook_1.pwmd", "joint_pca.pwmd", "config.json",
                     "global_descriptors.pwmd", "documents.csv"):
            assert (enc / name).exists(), name
        config = json.loads((enc / "config.json").read_text())
        assert config["k"] == 8 and config["n_codebooks"] == 2


class TestRetrieveClassify:
    def test_retrieve_report_schema(self, staged, tmp_path):
        report = tmp_path / "report.json"
        code = main([
            "retrieve", "--enc", str(staged / "enc"), "--report", str(report),
            "--heatmap-doc", str(tmp_path / "doc.png"), "--heatmap-scribe", str(tmp_path / "scribe.png"),
        ])
        assert code == 0
        data = json.loads(report.read_text())
        assert set(data) >= {"top1", "top5", "top10", "map", "per_query"}
        for entry in data["per_query"]:
            assert set(entry) == {"doc_id", "ap", "first_correct_rank"}
        assert (tmp_path / "doc.png").exists()
        assert (tmp_path / "doc.csv").exists()
        assert (tmp_path / "scribe.png").exists()

    def test_classify_nn_and_svm(self, staged, tmp_path):
        for clf in ("nn", "svm"):
            report = tmp_path / f"cls_{clf}.json"
            confusion = tmp_path / f"conf_{clf}.csv"
            code = main([
                "classify", "--enc", str(staged / "enc"), "--split", str(staged / "split.json"),
                "--classifier", clf, "--svm-c", "1.0",
                "--report", str(report), "--confusion", str(confusion),
            ])
            assert code == 0
            data = json.loads(report.read_text())
            assert data["classifier"] == clf
            assert 0.0 <= data["top1"] <= data["top5"] <= 100.0
            lines = confusion.read_text().splitlines()
            assert len(lines) == 5  # header + 4 writers
            header = lines[0].split(",")
            assert len(header) == 4


class TestRun:
    def test_run_with_overrides_and_cache(self, corpus_dir, tmp_path, capsys):
        config = PipelineConfig(
            input_dir=str(corpus_dir), workdir=str(tmp_path / "work"),
            binarize_method="su", feature_mode="rsift",
            codebooks=2, k=8, seeds=(1, 2), pca_dim=6,
        )
        path = tmp_path / "run.cfg"
        config.save(path)
        assert main(["run", str(path)]) == 0
        out = capsys.readouterr().out
        assert "stages run: scan, binarize, features, encode, retrieve, classify" in out
        assert main(["run", str(path)]) == 0
        out = capsys.readouterr().out
        assert "stages run: none" in out

        assert main(["run", str(path), "--set", "pool=sum", "--workdir", str(tmp_path / "work2")]) == 0
        snapshot = (tmp_path / "work2" / "enc" / "config.snapshot").read_text()
        assert "pool = sum" in snapshot

    def test_bad_config_key_exit_one(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("nonsense = 1\n")
        assert main(["run", str(path)]) == 1
