import numpy as np
import pytest

import polarloc as pl


@pytest.fixture(scope="module")
def world():
    return pl.generate_synthetic(seed=7, train_scans=8, map_scans=24, query_scans=24, angular_bins=64, radial_bins=32)


def test_synthetic_shapes(world):
    assert world["map"]["images"].shape == (24, 64, 32)
    assert world["query"]["poses"].shape == (24, 4)
    assert world["map"]["images"].dtype == np.float32


def test_ring_key_shift_invariant(world):
    img = world["map"]["images"][0]
    assert np.array_equal(pl.ring_key(img, 8), pl.ring_key(pl.roll_angular(img, 13), 8))


def test_scancontext_shift(world):
    img = world["map"]["images"][3]
    a = pl.scancontext(img, 16, 8)
    b = pl.scancontext(pl.roll_angular(img, 4 * 3), 16, 8)
    assert a.shape == (16, 8)
    assert pl.scancontext_distance(a, b) == pytest.approx(0.0, abs=1e-6)


def test_conv_identity_kernel():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 6, 4)).astype(np.float32)
    w = np.zeros((2, 2, 3, 3), np.float32)
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    y = pl.conv2d_circular(x, w, np.zeros(2, np.float32))
    np.testing.assert_allclose(y, x, atol=1e-6)


def test_model_descriptor_invariance(world):
    model = pl.Model.build(64, 32, seed=3)
    img = world["query"]["images"][:1]
    shifted = np.stack([pl.roll_angular(img[0], 16)])
    d = model.describe(np.concatenate([img, shifted]))
    assert d.shape == (2, model.config["descriptor_dim"])
    np.testing.assert_allclose(d[0], d[1], atol=1e-5)


def test_knn_and_evaluate():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((50, 8)).astype(np.float32)
    hits = pl.knn(m, m[7], 3)
    assert hits[0] == (7, 0.0)
    xy = rng.uniform(0, 100, (50, 2))
    recall = pl.evaluate(m, xy, m, xy, max_n=5, thresholds=[1.0, 5.0])
    assert recall.shape == (2, 5)
    np.testing.assert_array_equal(recall[:, 0], [1.0, 1.0])


def test_labels_and_errors():
    assert pl.label_pair(0, 0, 3, 4) == "similar"
    assert pl.label_pair(0, 0, 10, 0) == "excluded"
    assert pl.label_pair(0, 0, 20, 0) == "dissimilar"
    with pytest.raises(ValueError):
        pl.ring_key(np.zeros((10, 3), np.float32), 8)
    with pytest.raises(ValueError):
        pl.Model.load("/nonexistent/model.ploc")
