import numpy as np
import pytest

from lff.data import Dataset
from lff.gp import GpConfig, farthest_first, gp_fit, gp_predict, kernel_matrix


def dense_oracle(train_X, train_y, test_X, width, beta):
    """Plain dense solve with the same standardization convention."""
    mean, std = train_X.mean(axis=0), train_X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (train_X - mean) / std
    Zt = (test_X - mean) / std

    def k(A, B):
        sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-sq / (2 * width**2))

    alpha = np.linalg.solve(k(Z, Z) + np.eye(len(Z)) / beta, train_y)
    return k(Zt, Z) @ alpha


def test_single_sample_shrinks_by_prior():
    beta = 4.0
    data = Dataset(np.array([[1.5]]), np.array([2.0]))
    model = gp_fit(data, GpConfig(kernel_width=1.0, prior_precision=beta))
    pred = gp_predict(model, np.array([[1.5]]))
    assert pred[0] == pytest.approx(2.0 / (1.0 + 1.0 / beta), rel=1e-12)


def test_matches_dense_oracle(rng):
    X = rng.standard_normal((50, 1)) * 3.0
    y = np.sin(X[:, 0]) + 0.1 * rng.standard_normal(50)
    config = GpConfig(kernel_width=0.8, prior_precision=50.0)
    model = gp_fit(Dataset(X, y), config)
    Xt = rng.standard_normal((20, 1)) * 3.0
    expected = dense_oracle(X, y, Xt, 0.8, 50.0)
    np.testing.assert_allclose(gp_predict(model, Xt), expected, atol=1e-8)
    np.testing.assert_allclose(gp_predict(model, X), dense_oracle(X, y, X, 0.8, 50.0), atol=1e-8)


def test_near_interpolation_at_support_points(rng):
    X = rng.random((25, 2))
    y = rng.standard_normal(25)
    model = gp_fit(Dataset(X, y), GpConfig(kernel_width=0.5, prior_precision=1e10))
    np.testing.assert_allclose(gp_predict(model, X), y, atol=1e-3)


def test_zero_labels_give_zero_predictions(rng):
    X = rng.random((30, 2))
    model = gp_fit(Dataset(X, np.zeros(30)), GpConfig())
    np.testing.assert_array_equal(gp_predict(model, rng.random((10, 2))), np.zeros(10))


def test_kernel_gram_is_symmetric_psd(rng):
    for n in (10, 60, 100):
        Z = rng.standard_normal((n, 3))
        K = kernel_matrix(Z, Z, width=1.3)
        np.testing.assert_allclose(K, K.T, atol=1e-12)
        eigs = np.linalg.eigvalsh(K)
        assert eigs.min() >= -1e-8


def test_subset_selection_is_deterministic(rng):
    X = rng.standard_normal((200, 2))
    first = farthest_first(X, 40, seed=9)
    second = farthest_first(X, 40, seed=9)
    np.testing.assert_array_equal(first, second)
    assert len(np.unique(first)) == 40
    assert not np.array_equal(first, farthest_first(X, 40, seed=10))


def test_max_support_caps_the_fit(rng):
    X = rng.standard_normal((120, 2))
    y = X[:, 0] + X[:, 1]
    model = gp_fit(Dataset(X, y), GpConfig(kernel_width=1.0, prior_precision=100.0, max_support=30))
    assert model.n_support == 30
    # still a sensible regressor on the training region
    pred = gp_predict(model, X)
    assert np.corrcoef(pred, y)[0, 1] > 0.95


def test_predict_rejects_wrong_width(rng):
    model = gp_fit(Dataset(rng.random((10, 2)), np.zeros(10)), GpConfig())
    with pytest.raises(ValueError):
        gp_predict(model, rng.random((5, 3)))


def test_config_validation():
    with pytest.raises(ValueError):
        GpConfig(kernel_width=0.0)
    with pytest.raises(ValueError):
        GpConfig(prior_precision=-1.0)
    with pytest.raises(ValueError):
        GpConfig(max_support=0)
