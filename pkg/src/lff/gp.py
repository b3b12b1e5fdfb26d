"""Minimal Gaussian-process regression baseline.

Mean prediction with an isotropic Gaussian kernel and prior precision
beta: solve (K + I/beta) alpha = y on the support set and predict with
k(x, .) . alpha.  Inputs are standardized per column inside the model (the
box transform exists only for the cosine basis).  When the training set
exceeds max_support, a farthest-first traversal picks a uniformly spread
support subset; the fit then uses only those samples.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .trainer import solve_psd


@dataclass
class GpConfig:
    kernel_width: float = 1.0
    prior_precision: float = 1.0
    max_support: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.kernel_width <= 0 or self.prior_precision <= 0 or self.max_support < 1:
            raise ValueError("GpConfig values must be positive")


@dataclass
class GpModel:
    support: np.ndarray  # (s, d), standardized coordinates
    alpha: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    config: GpConfig

    @property
    def n_support(self):
        return len(self.alpha)


def kernel_matrix(A, B, width):
    """Gaussian kernel exp(-|a-b|^2 / (2 width^2)) for all row pairs."""
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * width**2))


def farthest_first(X, count, seed=0):
    """Indices of a uniformly spread subset by farthest-first traversal.

    Deterministic under the seed, which picks the starting point only.
    """
    n = len(X)
    count = min(count, n)
    rng = np.random.default_rng(seed)
    chosen = np.empty(count, dtype=int)
    chosen[0] = int(rng.integers(n))
    dist = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for i in range(1, count):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        np.minimum(dist, np.sum((X - X[nxt]) ** 2, axis=1), out=dist)
    return np.sort(chosen)


def gp_fit(data, config=None):
    """Fit the kernel weights on (a subset of) the training samples."""
    if config is None:
        config = GpConfig()
    if not isinstance(data, Dataset):
        raise TypeError("gp_fit expects a Dataset")
    mean = data.X.mean(axis=0)
    std = data.X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (data.X - mean) / std
    y = data.y
    if data.n > config.max_support:
        idx = farthest_first(Z, config.max_support, config.seed)
        Z, y = Z[idx], y[idx]
    K = kernel_matrix(Z, Z, config.kernel_width)
    K[np.diag_indices_from(K)] += 1.0 / config.prior_precision
    alpha, _ = solve_psd(K, y)
    return GpModel(support=Z, alpha=alpha, mean=mean, std=std, config=config)


def gp_predict(model, X):
    """Mean predictions at raw points X of shape (n, d)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.support.shape[1]:
        raise ValueError(
            f"expected X of shape (n, {model.support.shape[1]}), got {X.shape}"
        )
    Z = (X - model.mean) / model.std
    return kernel_matrix(Z, model.support, model.config.kernel_width) @ model.alpha
