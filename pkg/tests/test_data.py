import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hslfusion.data import (
    PcaReducer,
    RasterFormatError,
    RasterScene,
    apply_pca,
    band_minmax,
    extract_patch,
    extract_patch_batch,
    fit_pca,
    load_scene,
    normalize_bands,
    parse_raster_header,
    read_labels,
    read_raster,
    shuffled_batches,
    write_labels,
    write_raster,
)


def _header(m, n, b):
    return {"height": m, "width": n, "bands": b, "dtype": "f32", "layout": "BSQ"}


class TestRasterIO:
    @pytest.mark.parametrize("m,n,b", [(349, 1905, 144), (166, 600, 63)])
    def test_benchmark_shaped_headers_accepted(self, m, n, b):
        assert parse_raster_header(_header(m, n, b)) == (m, n, b)

    def test_byte_count_mismatch_rejected(self, tmp_path):
        (tmp_path / "r.json").write_text(json.dumps(_header(2, 2, 1)))
        (tmp_path / "r.f32").write_bytes(b"\x00" * 12)  # needs 16
        with pytest.raises(RasterFormatError, match="12 bytes, expected 16"):
            read_raster(tmp_path / "r.json")

    def test_bad_layout_rejected(self):
        header = _header(2, 2, 1)
        header["layout"] = "BIP"
        with pytest.raises(RasterFormatError):
            parse_raster_header(header)

    def test_round_trip_is_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        cube = rng.normal(size=(5, 7, 3)).astype(np.float32)
        write_raster(tmp_path / "cube.json", cube)
        back = read_raster(tmp_path / "cube.json")
        assert back.tobytes() == cube.tobytes()
        write_raster(tmp_path / "cube2.json", back)
        assert (tmp_path / "cube.f32").read_bytes() == (tmp_path / "cube2.f32").read_bytes()

    def test_load_scene_checks_alignment(self, tmp_path):
        write_raster(tmp_path / "hsi.json", np.zeros((4, 5, 3), dtype=np.float32))
        write_raster(tmp_path / "lidar.json", np.zeros((4, 5), dtype=np.float32))
        scene = load_scene(tmp_path / "hsi.json", tmp_path / "lidar.json")
        assert (scene.height, scene.width, scene.band_count) == (4, 5, 3)
        write_raster(tmp_path / "bad.json", np.zeros((3, 5), dtype=np.float32))
        with pytest.raises(ValueError):
            load_scene(tmp_path / "hsi.json", tmp_path / "bad.json")

    def test_scene_rejects_non_finite(self):
        hsi = np.zeros((2, 2, 1), dtype=np.float32)
        hsi[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            RasterScene(hsi=hsi, lidar=np.zeros((2, 2), dtype=np.float32))

    def test_labels_round_trip_and_validation(self, tmp_path):
        pixels = np.array([[0, 1, 2], [3, 4, 1]])
        write_labels(tmp_path / "l.csv", pixels)
        np.testing.assert_array_equal(read_labels(tmp_path / "l.csv"), pixels)
        (tmp_path / "bad.csv").write_text("x,y,cls\n0,0,1\n")
        with pytest.raises(ValueError):
            read_labels(tmp_path / "bad.csv")


class TestPca:
    def test_full_rank_reconstruction(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 6))
        pca = PcaReducer(n_components=6).fit(X)
        back = pca.inverse_transform(pca.transform(X))
        err = np.linalg.norm(back - X) / np.linalg.norm(X - X.mean(axis=0))
        assert err < 1e-4

    def test_two_band_toy_component(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        pca = PcaReducer(n_components=1).fit(X)
        np.testing.assert_allclose(pca.components_[0], [1 / np.sqrt(2), 1 / np.sqrt(2)],
                                   atol=1e-9)

    def test_default_component_count(self):
        assert PcaReducer().n_components == 20

    def test_components_orthonormal(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 10)) @ rng.normal(size=(10, 10))
        pca = PcaReducer(n_components=5).fit(X)
        gram = pca.components_ @ pca.components_.T
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-5)

    def test_mean_spectrum_projects_to_zero(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(100, 8))
        pca = PcaReducer(n_components=4).fit(X)
        np.testing.assert_allclose(pca.transform(X.mean(axis=0)[None]), 0.0, atol=1e-9)

    def test_score_variances_ordered(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(500, 7)) * np.array([5, 3, 2, 1, 1, 1, 1.0])
        scores = PcaReducer(n_components=3).fit(X).transform(X)
        variances = scores.var(axis=0)
        assert variances[0] >= variances[1] >= variances[2]
        assert (np.diff(PcaReducer(n_components=7).fit(X).explained_variance_) <= 1e-9).all()

    def test_component_count_out_of_range(self):
        X = np.zeros((10, 4))
        with pytest.raises(ValueError):
            PcaReducer(n_components=5).fit(X)
        with pytest.raises(ValueError):
            PcaReducer(n_components=0).fit(X)

    def test_scene_helpers(self):
        rng = np.random.default_rng(5)
        scene = RasterScene(hsi=rng.normal(size=(6, 5, 4)).astype(np.float32),
                            lidar=np.zeros((6, 5), dtype=np.float32))
        pca = fit_pca(scene, 4)
        reduced = apply_pca(scene, pca)
        assert reduced.shape == (6, 5, 4)
        flat = scene.hsi.reshape(-1, 4).astype(np.float64)
        back = pca.inverse_transform(reduced.reshape(-1, 4))
        np.testing.assert_allclose(back, flat, atol=1e-4)

    def test_constant_spectrum_projects_to_zero(self):
        scene = RasterScene(hsi=np.full((4, 4, 3), 2.5, dtype=np.float32),
                            lidar=np.zeros((4, 4), dtype=np.float32))
        # constant image: covariance is zero, projections of centered data vanish
        pca = fit_pca(scene, 2)
        np.testing.assert_allclose(apply_pca(scene, pca), 0.0, atol=1e-6)

    def test_band_mismatch(self):
        pca = PcaReducer(n_components=2).fit(np.random.default_rng(6).normal(size=(50, 4)))
        with pytest.raises(ValueError):
            pca.transform(np.zeros((3, 5)))


class TestNormalize:
    def test_midpoint(self):
        band = np.array([[10.0, 20.0], [15.0, 10.0]], dtype=np.float32)
        out = normalize_bands(band)
        assert out[1, 0] == pytest.approx(0.5)

    def test_constant_band_maps_to_zero(self):
        out = normalize_bands(np.full((3, 3, 2), 7.0, dtype=np.float32))
        np.testing.assert_array_equal(out, 0.0)

    def test_output_range_per_band(self):
        rng = np.random.default_rng(7)
        cube = rng.normal(size=(5, 6, 3)).astype(np.float32)
        out = normalize_bands(cube)
        np.testing.assert_allclose(out.min(axis=(0, 1)), 0.0, atol=1e-7)
        np.testing.assert_allclose(out.max(axis=(0, 1)), 1.0, atol=1e-7)

    def test_minmax_round(self):
        cube = np.random.default_rng(8).normal(size=(4, 4, 2)).astype(np.float32)
        mins, maxs = band_minmax(cube)
        assert mins.shape == (2,) and maxs.shape == (2,)


class TestPatches:
    def test_centered_patch_is_the_full_image(self):
        img = np.random.default_rng(9).normal(size=(11, 11, 2))
        patch = extract_patch(img, 5, 5, 11)
        np.testing.assert_array_equal(patch, img)

    def test_corner_patch_mirrors_row_and_col_one(self):
        img = np.arange(9.0).reshape(3, 3)
        patch = extract_patch(img, 0, 0, 3)
        expected = np.pad(img, 1, mode="reflect")[0:3, 0:3]
        np.testing.assert_array_equal(patch, expected)
        assert patch[0, 0] == img[1, 1]  # row/col -1 mirror to row/col 1

    def test_even_patch_size_rejected(self):
        with pytest.raises(ValueError):
            extract_patch(np.zeros((5, 5)), 2, 2, 4)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(10)
        img = rng.normal(size=(9, 12, 3))
        rows = np.array([0, 4, 8, 2])
        cols = np.array([0, 6, 11, 3])
        batch = extract_patch_batch(img, rows, cols, 5)
        for i, (r, c) in enumerate(zip(rows, cols)):
            np.testing.assert_array_equal(batch[i], extract_patch(img, r, c, 5))

    @settings(max_examples=50, deadline=None)
    @given(r=st.integers(0, 8), c=st.integers(0, 8), p=st.sampled_from([3, 5, 7]))
    def test_patch_matches_reflect_padding(self, r, c, p):
        img = np.arange(81.0).reshape(9, 9)
        half = p // 2
        padded = np.pad(img, half, mode="reflect")
        expected = padded[r:r + p, c:c + p]
        np.testing.assert_array_equal(extract_patch(img, r, c, p), expected)


class TestBatches:
    def test_split_sizes(self):
        rng = np.random.default_rng(0)
        batches = shuffled_batches(130, 64, rng)
        assert [len(b) for b in batches] == [64, 64, 2]

    def test_same_seed_same_order(self):
        a = shuffled_batches(50, 8, np.random.default_rng(3))
        b = shuffled_batches(50, 8, np.random.default_rng(3))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_epoch_covers_every_sample_once(self):
        batches = shuffled_batches(37, 5, np.random.default_rng(4))
        merged = np.concatenate(batches)
        np.testing.assert_array_equal(np.sort(merged), np.arange(37))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            shuffled_batches(0, 4, np.random.default_rng(0))
