import json

import numpy as np
import pytest
from PIL import Image

from papyrid.errors import InputError, UnknownMethodError
from papyrid.pipeline import PipelineConfig, effective_workdir, run_pipeline
from papyrid.synthetic import generate_corpus

TINY = dict(
    binarize_method="su",
    feature_mode="rsift",
    codebooks=2,
    k=8,
    seeds=(1, 2),
    pca_dim=6,
    jobs=1,
)


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    directory = tmp_path_factory.mktemp("imgs")
    generate_corpus(directory, writers=4, docs_per_writer=3, seed=7, size=320)
    return directory


class TestPipelineConfig:
    def test_text_round_trip(self):
        cfg = PipelineConfig(input_dir="imgs", workdir="w", k=32, seeds=(3, 4), codebooks=2, upright=True)
        assert PipelineConfig.parse(cfg.to_text()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(InputError, match="unknown key"):
            PipelineConfig.parse("input_dir = x\nmystery = 3\n")

    def test_comments_and_blank_lines(self):
        cfg = PipelineConfig.parse("# hello\n\ninput_dir = a  # trailing\nk = 12\n")
        assert cfg.input_dir == "a" and cfg.k == 12

    def test_bad_method(self):
        with pytest.raises(UnknownMethodError):
            PipelineConfig(binarize_method="magic")

    def test_rsift_requires_mask_source(self):
        with pytest.raises(InputError):
            PipelineConfig(binarize_method="none", feature_mode="rsift")

    def test_overrides_win(self):
        cfg = PipelineConfig(input_dir="a", k=5)
        out = cfg.with_overrides({"k": "9", "pool": "sum"})
        assert out.k == 9 and out.pool == "sum" and out.input_dir == "a"

    def test_cache_env_overrides_workdir(self, monkeypatch, tmp_path):
        cfg = PipelineConfig(workdir=str(tmp_path / "a"))
        monkeypatch.setenv("PAPYRID_CACHE", str(tmp_path / "b"))
        assert effective_workdir(cfg) == tmp_path / "b"
        monkeypatch.delenv("PAPYRID_CACHE")
        assert effective_workdir(cfg) == tmp_path / "a"


class TestRunPipeline:
    def test_smoke_and_artifacts(self, tiny_corpus, tmp_path):
        cfg = PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "work"), **TINY)
        result = run_pipeline(cfg)
        assert result.report.exists()
        assert (result.workdir / "retrieve" / "heatmap_doc.png").exists()
        assert (result.workdir / "retrieve" / "heatmap_scribe.png").exists()
        assert (result.workdir / "classify" / "confusion.csv").exists()
        assert (result.workdir / "run.log").exists()
        report = json.loads(result.report.read_text())
        assert set(report) >= {"top1", "top5", "top10", "map", "per_query"}
        assert report["top1"] <= report["top5"] <= report["top10"]
        # Stage directories carry the config snapshot that produced them.
        for stage_dir in ("masks", "feats", "enc"):
            assert (result.workdir / stage_dir / "config.snapshot").exists()

    def test_rerun_skips_and_force_reruns(self, tiny_corpus, tmp_path):
        cfg = PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "work"), **TINY)
        first = run_pipeline(cfg)
        assert first.stages_run
        report_bytes = first.report.read_bytes()
        second = run_pipeline(cfg)
        assert second.stages_run == []
        assert set(second.stages_skipped) == {"scan", "binarize", "features", "encode", "retrieve", "classify"}
        assert first.report.read_bytes() == report_bytes
        third = run_pipeline(cfg, force=True)
        assert third.stages_skipped == []
        assert first.report.read_bytes() == report_bytes

    def test_parameter_change_invalidates_downstream(self, tiny_corpus, tmp_path):
        cfg = PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "work"), **TINY)
        run_pipeline(cfg)
        changed = PipelineConfig(
            input_dir=str(tiny_corpus), workdir=str(tmp_path / "work"), **{**TINY, "pool": "sum"}
        )
        result = run_pipeline(changed)
        assert "encode" in result.stages_run and "retrieve" in result.stages_run
        assert "binarize" in result.stages_skipped and "features" in result.stages_skipped

    def test_distinct_workdirs_byte_identical_reports(self, tiny_corpus, tmp_path):
        a = run_pipeline(PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "a"), **TINY))
        b = run_pipeline(PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "b"), **TINY))
        assert a.report.read_bytes() == b.report.read_bytes()
        assert a.classification_report.read_bytes() == b.classification_report.read_bytes()

    def test_sum_pool_distinct_encoders_both_reports(self, tiny_corpus, tmp_path):
        gmp = run_pipeline(PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "g"), **TINY))
        summ = run_pipeline(
            PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "s"), **{**TINY, "pool": "sum"})
        )
        g_desc = (gmp.workdir / "enc" / "global_descriptors.pwmd").read_bytes()
        s_desc = (summ.workdir / "enc" / "global_descriptors.pwmd").read_bytes()
        assert g_desc != s_desc
        assert gmp.report.exists() and summ.report.exists()

    def test_missing_input(self, tmp_path):
        cfg = PipelineConfig(workdir=str(tmp_path / "w"))
        with pytest.raises(InputError):
            run_pipeline(cfg)

    def test_external_mask_edit_invalidates_cache(self, tiny_corpus, tmp_path):
        first = run_pipeline(PipelineConfig(input_dir=str(tiny_corpus), workdir=str(tmp_path / "su"), **TINY))
        mask_dir = first.workdir / "masks"
        ext = PipelineConfig(
            input_dir=str(tiny_corpus), workdir=str(tmp_path / "ext"),
            **{**TINY, "binarize_method": "external", "mask_dir": str(mask_dir)},
        )
        run_pipeline(ext)
        assert run_pipeline(ext).stages_run == []
        # Editing one supplied mask must re-run binarize and everything after.
        target = sorted(mask_dir.glob("*.png"))[0]
        img = np.asarray(Image.open(target)).copy()
        img[:8, :8] = 0
        Image.fromarray(img).save(target)
        rerun = run_pipeline(ext)
        assert "binarize" in rerun.stages_run and "encode" in rerun.stages_run
