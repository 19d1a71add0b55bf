import numpy as np
import pytest

from rankcal import DesignSpec, TrialData


def make_trial(n=200, J=4, p=2, seed=0, effect=0.0, rho=0.3, coef=0.3):
    """Simple-randomized trial with outcomes linear in correlated covariates."""
    rng = np.random.default_rng(seed)
    cov = np.full((p, p), rho)
    np.fill_diagonal(cov, 1.0)
    x = rng.multivariate_normal(np.zeros(p), cov, size=n)
    a = rng.integers(1, J + 1, size=n)
    y = effect * (a - 1) + x @ np.full(p, coef) + rng.normal(0, 0.5, n)
    return TrialData(a, y, x, J)


@pytest.fixture
def trial():
    return make_trial()


@pytest.fixture
def design4():
    return DesignSpec.uniform(4, (1, 2))
