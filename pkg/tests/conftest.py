import numpy as np
import pytest

from ebct import Dataset


def random_dataset(rng, n, k, outcome=False):
    """A generic solvable instance: smooth covariates, mildly selected treatment."""
    x = rng.standard_normal((n, k))
    t = x @ rng.uniform(0.2, 0.8, size=k) + rng.standard_normal(n)
    y = t + x.sum(axis=1) + rng.standard_normal(n) if outcome else None
    return Dataset(treatment=t, covariates=x, outcome=y)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
