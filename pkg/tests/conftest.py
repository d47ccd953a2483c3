import numpy as np
import pytest

from sdkrefocus import HilbertSpace


@pytest.fixture
def space1():
    return HilbertSpace(1, 12)


@pytest.fixture
def space2():
    return HilbertSpace(2, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_unitary(rng, dim):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def max_abs(m):
    return float(np.abs(m).max())


def overlap_deficit(u, v):
    """1 - |tr(v^dag u)| / dim: global-phase-free distance of unitaries."""
    d = u.shape[0]
    return 1.0 - abs(np.trace(v.conj().T @ u)) / d
