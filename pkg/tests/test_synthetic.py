import numpy as np
import pytest

from hslfusion.synthetic import SPECTRAL_TWINS, generate_synthetic_scene, height_twins


def test_same_seed_gives_identical_scenes():
    a = generate_synthetic_scene(n_classes=4, height=64, width=64, n_bands=30, seed=7)
    b = generate_synthetic_scene(n_classes=4, height=64, width=64, n_bands=30, seed=7)
    assert a.scene.hsi.tobytes() == b.scene.hsi.tobytes()
    assert a.scene.lidar.tobytes() == b.scene.lidar.tobytes()
    np.testing.assert_array_equal(a.train_pixels, b.train_pixels)
    np.testing.assert_array_equal(a.test_pixels, b.test_pixels)


def test_different_seed_differs():
    a = generate_synthetic_scene(seed=1)
    b = generate_synthetic_scene(seed=2)
    assert a.scene.hsi.tobytes() != b.scene.hsi.tobytes()


def test_spectral_twins_are_spectrally_close_but_height_separated():
    syn = generate_synthetic_scene(n_classes=4, seed=3)
    c1, c2 = SPECTRAL_TWINS
    mean_spec = {c: syn.scene.hsi[syn.truth == c].mean(axis=0) for c in (c1, c2)}
    per_band_gap = np.abs(mean_spec[c1] - mean_spec[c2]).mean()
    assert per_band_gap < syn.params["noise_hsi"]
    h1 = syn.scene.lidar[syn.truth == c1].mean()
    h2 = syn.scene.lidar[syn.truth == c2].mean()
    assert abs(h1 - h2) > 5 * syn.params["noise_lidar"]


def test_height_twins_share_height_but_differ_spectrally():
    syn = generate_synthetic_scene(n_classes=4, seed=3)
    c1, c2 = height_twins(4)
    h1 = syn.scene.lidar[syn.truth == c1].mean()
    h2 = syn.scene.lidar[syn.truth == c2].mean()
    assert abs(h1 - h2) < 5 * syn.params["noise_lidar"]
    mean_spec = {c: syn.scene.hsi[syn.truth == c].mean(axis=0) for c in (c1, c2)}
    assert np.abs(mean_spec[c1] - mean_spec[c2]).max() > 10 * syn.params["noise_hsi"]


def test_train_and_test_pixels_disjoint():
    syn = generate_synthetic_scene(seed=5)
    train = {(r, c) for r, c, _ in syn.train_pixels}
    test = {(r, c) for r, c, _ in syn.test_pixels}
    assert not train & test


def test_every_class_sampled_and_labels_match_truth():
    syn = generate_synthetic_scene(n_classes=5, seed=6)
    for pixels in (syn.train_pixels, syn.test_pixels):
        assert set(pixels[:, 2]) == set(range(1, 6))
        for r, c, cid in pixels:
            assert syn.truth[r, c] == cid


def test_truth_covers_every_pixel():
    syn = generate_synthetic_scene(n_classes=3, seed=1)
    assert syn.truth.min() >= 1 and syn.truth.max() <= 3


def test_degenerate_requests_rejected():
    with pytest.raises(ValueError):
        generate_synthetic_scene(n_classes=1)
    with pytest.raises(ValueError):
        generate_synthetic_scene(height=8, width=8)  # smaller than a block
    with pytest.raises(ValueError):
        generate_synthetic_scene(n_classes=4, train_per_class=10_000)
