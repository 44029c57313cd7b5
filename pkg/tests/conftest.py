"""Shared helpers for the test suite."""

import numpy as np
import pytest

from sqfa.stats import ClassEnsemble


def rand_spd(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    a = rng.standard_normal((dim, dim))
    return scale * (a @ a.T + dim * np.eye(dim))


def rand_invertible(dim: int, rng: np.random.Generator, max_cond: float = 1e3) -> np.ndarray:
    """Random invertible matrix with a bounded condition number."""
    while True:
        g = rng.standard_normal((dim, dim))
        if np.linalg.cond(g) <= max_cond:
            return g


def rand_ensemble(n: int, c: int, rng: np.random.Generator) -> ClassEnsemble:
    """Random class ensemble with SPD covariances."""
    means = rng.standard_normal((c, n))
    covs = np.stack([rand_spd(n, rng) for _ in range(c)])
    return ClassEnsemble(counts=np.full(c, 100), means=means, covariances=covs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
