import numpy as np
import pytest

from hslfusion.pipeline import ScenePreprocessor, build_patch_matrix, train_model
from hslfusion.synthetic import generate_synthetic_scene

# small scene shared across test modules; twins included by construction
SCENE_SEED = 7


@pytest.fixture(scope="session")
def synthetic():
    return generate_synthetic_scene(
        n_classes=4, height=64, width=64, n_bands=30, seed=SCENE_SEED,
        train_per_class=30, test_per_class=50)


@pytest.fixture(scope="session")
def patch_data(synthetic):
    """(X_train, y_train, X_test, y_test) at the default patch size."""
    pre = ScenePreprocessor.fit(synthetic.scene, n_components=10)
    planes, lidar = pre.transform(synthetic.scene)
    X_tr, y_tr = build_patch_matrix(planes, lidar, synthetic.train_pixels, 11)
    X_te, y_te = build_patch_matrix(planes, lidar, synthetic.test_pixels, 11)
    return X_tr, y_tr, X_te, y_te


@pytest.fixture(scope="session")
def trained_df_s(synthetic):
    """A quick decision-fusion model reused by several test modules."""
    return train_model(
        synthetic.scene, synthetic.train_pixels, variant="CNN-DF-S",
        n_components=10, epochs=12, seed=3)
