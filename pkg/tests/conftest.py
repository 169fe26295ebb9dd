import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparseunmix.speclib import SpectralLibrary, Spectrum, load_bundled_library

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def library():
    return load_bundled_library()


def make_library(columns, names=None, axis=None, category="Test"):
    """Library whose design matrix is exactly ``columns`` (W x N)."""
    columns = np.asarray(columns, dtype=float)
    W, N = columns.shape
    axis = np.linspace(2.0, 2.5, W) if axis is None else axis
    names = names or [f"s{i + 1}" for i in range(N)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # synthetic test columns may exceed reflectance 1
        return SpectralLibrary(tuple(
            Spectrum(n, category, "", axis, columns[:, i]) for i, n in enumerate(names)
        ))


def orthogonal_columns(W, N, seed=0, scale=1.0):
    """N orthogonal columns of squared norm ``scale * W``."""
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(W, N)))
    return q * np.sqrt(scale * W)
