import numpy as np

from papyrid.corpus import parse_writer_label, scan_corpus
from papyrid.synthetic import generate_corpus, render_document, writer_style


class TestSyntheticCorpus:
    def test_deterministic_rendering(self):
        a = render_document(3, 1, seed=7)
        b = render_document(3, 1, seed=7)
        assert np.array_equal(a, b)
        c = render_document(3, 1, seed=8)
        assert not np.array_equal(a, c)

    def test_styles_distinct(self):
        styles = [writer_style(w) for w in range(10)]
        assert len({(s.slant_deg, s.cross_angle_deg, s.stroke_width, s.curvature) for s in styles}) == 10

    def test_generated_names_parse(self, tmp_path):
        generate_corpus(tmp_path, writers=3, docs_per_writer=3, seed=1, size=320)
        corpus = scan_corpus(tmp_path)
        assert len(corpus) == 9
        assert corpus.writers() == ["w00", "w01", "w02"]
        for record in corpus.records:
            assert parse_writer_label(record.path.name) == record.writer

    def test_dark_strokes_on_light_ground(self):
        page = render_document(0, 0, seed=7, size=320)
        assert page.dtype == np.uint8
        dark_fraction = (page < 100).mean()
        assert 0.02 < dark_fraction < 0.5
        assert (page > 150).mean() > 0.4
