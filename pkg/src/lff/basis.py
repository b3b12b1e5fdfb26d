"""One-dimensional Fourier cosine bases on the unit interval.

The basis of size m is orthonormal under the uniform measure on [0, 1]:

    phi_1(x) = 1,   phi_j(x) = sqrt(2) * cos((j - 1) * pi * x)  for j >= 2.

With this scaling the Gram matrix <phi_i, phi_j> is exactly the identity
and the Gram matrix of the derivatives is diag((j-1)^2 * pi^2), so both
are available in closed form.  The cosine family is the only basis kind
implemented; the enumeration below leaves the extension point explicit.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

SQRT2 = float(np.sqrt(2.0))


class BasisKind(enum.Enum):
    COSINE = "cosine"


@dataclass(frozen=True)
class BasisSpec:
    """A basis of `size` cosine functions on the closed interval [0, 1]."""

    size: int
    kind: BasisKind = field(default=BasisKind.COSINE)

    def __post_init__(self):
        if not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise ValueError(f"basis size must be a positive integer, got {self.size!r}")
        if self.kind is not BasisKind.COSINE:
            raise ValueError(f"unsupported basis kind: {self.kind!r}")


def evaluate_basis(spec, x):
    """Evaluate every basis function at the scalar x.

    x is clamped into [0, 1]; the basis is not defined beyond the box and
    extrapolation has to stay deterministic.  Returns a vector of length
    spec.size with entries phi_j(x).
    """
    return sample_matrix(spec, np.atleast_1d(float(x)))[:, 0]


def sample_matrix(spec, xs):
    """Evaluate the basis on a vector of points.

    Returns the (spec.size, n) matrix Phi with Phi[j-1, t] = phi_j(xs[t]).
    Points outside [0, 1] are clamped to the interval ends.
    """
    xs = np.clip(np.asarray(xs, dtype=float), 0.0, 1.0)
    j = np.arange(spec.size)
    phi = np.cos(np.pi * np.outer(j, xs))
    phi[1:] *= SQRT2
    return phi


def covariance(spec):
    """Gram matrix <phi_i, phi_j> under the uniform measure: the identity."""
    return np.eye(spec.size)


def derivative_covariance(spec):
    """Gram matrix <phi_i', phi_j'>: diagonal with entries (j-1)^2 * pi^2."""
    return np.diag(derivative_gram_diagonal(spec))


def derivative_gram_diagonal(spec):
    """Diagonal of the derivative Gram matrix as a 1-D array."""
    j = np.arange(spec.size)
    return (j * np.pi) ** 2


def mean_vector(spec):
    """Means <phi_j, 1> under the uniform measure: (1, 0, ..., 0)."""
    v = np.zeros(spec.size)
    v[0] = 1.0
    return v
