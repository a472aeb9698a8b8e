import numpy as np
import pytest

from papyrid.errors import InputError
from papyrid.numerics import Codebook, PcaModel
from papyrid.serialization import (
    DESCRIPTOR_MAGIC,
    MODEL_MAGIC,
    load_codebook,
    load_descriptors,
    load_matrix,
    load_pca,
    save_codebook,
    save_descriptors,
    save_matrix,
    save_pca,
)


class TestModelFiles:
    def test_codebook_round_trip(self, rng, tmp_path):
        cb = Codebook(centers=rng.normal(size=(7, 5)), k=7, seed=42, inertia=3.25)
        path = tmp_path / "cb.pwmd"
        save_codebook(cb, path)
        assert path.read_bytes()[:4] == MODEL_MAGIC
        again = load_codebook(path)
        assert again.k == 7 and again.seed == 42 and again.inertia == 3.25
        np.testing.assert_array_equal(again.centers, cb.centers)

    def test_pca_round_trip(self, rng, tmp_path):
        model = PcaModel(
            mean=rng.normal(size=6),
            basis=rng.normal(size=(6, 3)),
            eigenvalues=np.abs(rng.normal(size=3)) + 0.1,
            whiten=True,
            eps=1e-8,
        )
        path = tmp_path / "pca.pwmd"
        save_pca(model, path)
        again = load_pca(path)
        assert again.whiten is True and again.eps == 1e-8
        np.testing.assert_array_equal(again.mean, model.mean)
        np.testing.assert_array_equal(again.basis, model.basis)
        np.testing.assert_array_equal(again.eigenvalues, model.eigenvalues)
        x = rng.normal(size=(4, 6))
        np.testing.assert_array_equal(model.transform(x), again.transform(x))

    def test_matrix_round_trip(self, rng, tmp_path):
        m = rng.normal(size=(5, 9))
        path = tmp_path / "m.pwmd"
        save_matrix(m, path)
        np.testing.assert_array_equal(load_matrix(path), m)

    def test_kind_mismatch(self, rng, tmp_path):
        m = rng.normal(size=(2, 2))
        path = tmp_path / "m.pwmd"
        save_matrix(m, path)
        with pytest.raises(InputError):
            load_codebook(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pwmd"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(InputError):
            load_matrix(path)

    def test_truncated(self, rng, tmp_path):
        path = tmp_path / "m.pwmd"
        save_matrix(rng.normal(size=(4, 4)), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(InputError):
            load_matrix(path)


class TestDescriptorCache:
    def test_round_trip(self, rng, tmp_path):
        descs = rng.normal(size=(11, 64)).astype(np.float32)
        kps = rng.normal(size=(11, 4)).astype(np.float32)
        path = tmp_path / "doc.pwid"
        save_descriptors(path, descs, kps)
        raw = path.read_bytes()
        assert raw[:4] == DESCRIPTOR_MAGIC
        assert raw[4] == 1  # version
        d2, k2 = load_descriptors(path)
        np.testing.assert_array_equal(d2, descs)
        np.testing.assert_array_equal(k2, kps)

    def test_empty_document(self, tmp_path):
        path = tmp_path / "empty.pwid"
        save_descriptors(path, np.zeros((0, 64), dtype=np.float32), np.zeros((0, 4), dtype=np.float32))
        d, k = load_descriptors(path)
        assert d.shape == (0, 64) and k.shape == (0, 4)

    def test_layout_exact_bytes(self, tmp_path):
        # 1 descriptor of dim 2 plus its keypoint record, all little-endian f32.
        descs = np.array([[1.0, 2.0]], dtype="<f4")
        kps = np.array([[3.0, 4.0, 5.0, 6.0]], dtype="<f4")
        path = tmp_path / "one.pwid"
        save_descriptors(path, descs, kps)
        raw = path.read_bytes()
        assert raw[:4] == b"PWID"
        import struct

        version, count, dim = struct.unpack("<BII", raw[4:13])
        assert (version, count, dim) == (1, 1, 2)
        floats = np.frombuffer(raw[13:], dtype="<f4")
        np.testing.assert_array_equal(floats, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])

    def test_shape_mismatch_rejected(self, tmp_path):
        with pytest.raises(InputError):
            save_descriptors(tmp_path / "x.pwid", np.zeros((3, 8)), np.zeros((2, 4)))
