import numpy as np
import pytest

from conftest import f_measure, text_page
from papyrid import imageio
from papyrid.binarize import (
    SauvolaParams,
    SuParams,
    binarize,
    intensity_histogram,
    otsu_threshold,
    sauvola,
    su_binarize,
    su_contrast,
    su_maps,
    window_counts,
    window_sums,
)
from papyrid.errors import DimensionMismatchError, EmptyHistogramError, UnknownMethodError


def brute_force_otsu(hist):
    """Exhaustive scan of all 256 split points, maximizing between-class variance."""
    hist = np.asarray(hist, dtype=np.float64)
    best_t, best_var = 0, -1.0
    levels = np.arange(256)
    for t in range(256):
        w0 = hist[: t + 1].sum()
        w1 = hist[t + 1 :].sum()
        if w0 == 0 or w1 == 0:
            continue
        mu0 = (hist[: t + 1] * levels[: t + 1]).sum() / w0
        mu1 = (hist[t + 1 :] * levels[t + 1 :]).sum() / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


class TestOtsu:
    def test_two_point_distribution(self):
        hist = np.zeros(256)
        hist[0] = hist[255] = 100
        assert otsu_threshold(hist) == 0

    def test_degenerate_single_mode(self):
        hist = np.zeros(256)
        hist[128] = 50
        with pytest.warns(UserWarning):
            assert otsu_threshold(hist) == 128

    def test_three_spike_matches_brute_force(self):
        hist = np.zeros(256)
        hist[0] = hist[100] = hist[255] = 100
        assert otsu_threshold(hist) == brute_force_otsu(hist)

    def test_random_histograms_match_brute_force(self, rng):
        for _ in range(50):
            hist = rng.integers(0, 50, size=256).astype(float)
            hist[rng.integers(0, 256)] += 500
            assert otsu_threshold(hist) == brute_force_otsu(hist)

    def test_empty_histogram(self):
        with pytest.raises(EmptyHistogramError):
            otsu_threshold(np.zeros(256))

    def test_inversion_covariance(self, rng):
        # Inverting a two-mode image swaps the ink/background roles.
        img = np.where(rng.uniform(size=(40, 40)) < 0.3, 40, 210).astype(np.uint8)
        t = otsu_threshold(intensity_histogram(img))
        inv = (255 - img).astype(np.uint8)
        t_inv = otsu_threshold(intensity_histogram(inv))
        dark = img <= t
        light_of_inverted = inv <= t_inv
        assert np.array_equal(dark, ~light_of_inverted)


class TestWindowSums:
    def test_matches_naive(self, rng):
        arr = rng.uniform(0, 255, size=(17, 13))
        for window in (3, 5, 9):
            got = window_sums(arr, window)
            r = window // 2
            for y in range(arr.shape[0]):
                for x in range(arr.shape[1]):
                    patch = arr[max(y - r, 0) : y + r + 1, max(x - r, 0) : x + r + 1]
                    assert got[y, x] == pytest.approx(patch.sum(), rel=1e-12)

    def test_counts(self):
        counts = window_counts((5, 5), 3)
        assert counts[0, 0] == 4
        assert counts[2, 2] == 9
        assert counts[0, 2] == 6


class TestSuContrast:
    def test_constant_zero(self):
        assert np.all(su_contrast(np.full((10, 10), 77)) == 0)

    def test_black_white_mix(self):
        img = np.full((8, 8), 255.0)
        img[4, 4] = 0.0
        c = su_contrast(img)
        assert c[4, 4] == pytest.approx(1.0, abs=1e-6)

    def test_matches_naive_recomputation(self, rng):
        img = rng.integers(0, 256, size=(5, 5)).astype(np.float64)
        eps = 1e-8
        got = su_contrast(img, eps)
        for y in range(5):
            for x in range(5):
                patch = img[max(y - 1, 0) : y + 2, max(x - 1, 0) : x + 2]
                expect = (patch.max() - patch.min()) / (patch.max() + patch.min() + eps)
                assert got[y, x] == pytest.approx(expect, rel=1e-12)

    def test_range(self, rng):
        img = rng.integers(0, 256, size=(32, 32))
        c = su_contrast(img)
        assert c.min() >= 0.0 and c.max() <= 1.0


class TestSu:
    def test_black_text_on_white(self):
        img, truth = text_page()
        mask = su_binarize(img)
        assert f_measure(mask, truth) >= 0.95

    def test_constant_image_empty_mask(self):
        with pytest.warns(UserWarning):
            mask = su_binarize(np.full((32, 32), 128, dtype=np.uint8))
        assert mask.sum() == 0

    def test_high_contrast_window_invariant(self):
        img, _ = text_page()
        params = SuParams()
        maps = su_maps(img, params)
        mask = su_binarize(img, params)
        # Every ink pixel saw at least min_high_contrast high-contrast pixels.
        assert np.all(maps.window_count[mask] >= params.min_high_contrast)

    def test_deterministic(self):
        img, _ = text_page(noise_sigma=10, seed=3)
        assert np.array_equal(su_binarize(img), su_binarize(img))


class TestSauvola:
    def test_black_text_on_white(self):
        img, truth = text_page()
        assert f_measure(sauvola(img), truth) >= 0.95

    def test_sharp_page_near_perfect(self):
        # Hard 0/255 edges: the local threshold never reaches pure white.
        img, truth = text_page(blur=0.0)
        assert f_measure(sauvola(img), truth) >= 0.99

    def test_all_white_empty(self):
        assert sauvola(np.full((40, 40), 255, dtype=np.uint8)).sum() == 0

    def test_matches_naive(self, rng):
        img = rng.integers(0, 256, size=(32, 32)).astype(np.float64)
        params = SauvolaParams(window=7, k=0.2, r=128.0)
        got = sauvola(img, params)
        r = params.window // 2
        for y in range(32):
            for x in range(32):
                patch = img[max(y - r, 0) : y + r + 1, max(x - r, 0) : x + r + 1]
                t = patch.mean() * (1 + params.k * (patch.std() / params.r - 1))
                assert got[y, x] == (img[y, x] <= t)


class TestBinarizeDispatch:
    def test_otsu_method(self):
        img, truth = text_page()
        mask = binarize(img, "otsu")
        assert f_measure(mask, truth) >= 0.95

    def test_unknown_method(self):
        with pytest.raises(UnknownMethodError):
            binarize(np.zeros((8, 8), dtype=np.uint8), "magic")

    def test_external_mask_round_trip(self, tmp_path):
        img, truth = text_page()
        path = tmp_path / "mask.png"
        imageio.save_mask(truth, path)
        mask = binarize(img, "external", mask_path=path)
        assert np.array_equal(mask, truth)

    def test_external_dimension_mismatch(self, tmp_path):
        img, truth = text_page()
        path = tmp_path / "mask.png"
        imageio.save_mask(truth[:-10], path)
        with pytest.raises(DimensionMismatchError):
            binarize(img, "external", mask_path=path)

    def test_output_shape_and_repeatability(self):
        img, _ = text_page(noise_sigma=10, seed=9)
        for method in ("otsu", "sauvola", "su"):
            m1 = binarize(img, method)
            m2 = binarize(img, method)
            assert m1.shape == img.shape
            assert np.array_equal(m1, m2)
