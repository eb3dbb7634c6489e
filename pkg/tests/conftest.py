"""Shared panel builders for the test suite."""

import numpy as np
import pytest

from causalpanel.panel import PanelDataset


def build_panel(outcomes, n1, T1, covariates=None, covariate_labels=()):
    """PanelDataset with autogenerated labels: c0..c{n1-1} then t0, t1, ..."""
    outcomes = np.asarray(outcomes, dtype=float)
    n, T = outcomes.shape
    units = tuple(f"c{i}" for i in range(n1)) + tuple(f"x{i}" for i in range(n - n1))
    times = tuple(range(T))
    return PanelDataset(
        outcomes=outcomes,
        n1=n1,
        T1=T1,
        unit_labels=units,
        time_labels=times,
        covariates=covariates,
        covariate_labels=covariate_labels,
    )


def random_panel(n1=4, n2=1, T1=8, T2=4, seed=0, scale=1.0, K=0):
    """Unstructured noise panel; useful when only shapes and identities matter."""
    rng = np.random.default_rng(seed)
    n, T = n1 + n2, T1 + T2
    y = scale * rng.normal(size=(n, T))
    cov = rng.normal(size=(n, T, K)) if K else None
    labels = tuple(f"v{k}" for k in range(K))
    return build_panel(y, n1, T1, covariates=cov, covariate_labels=labels)


@pytest.fixture
def make_panel():
    return build_panel


@pytest.fixture
def noise_panel():
    return random_panel()
