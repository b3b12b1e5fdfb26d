import numpy as np
import pytest

from lff.basis import BasisSpec
from lff.model import Lff


def make_random_lff(rng, d=2, m=3, m_k=4, normalized=True, transform=None):
    """Random model; columns renormalized when a trained model is imitated."""
    specs = [BasisSpec(m_k) for _ in range(d)]
    B = []
    for _ in range(d):
        Bk = rng.standard_normal((m_k, m))
        if normalized and m:
            Bk = Bk / np.linalg.norm(Bk, axis=0, keepdims=True)
        B.append(Bk)
    a = rng.standard_normal(m)
    return Lff(a, B, specs, transform=transform, normalized=normalized)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
