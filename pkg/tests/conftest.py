"""Shared fixtures: small synthetic datasets that keep unit tests fast."""

import numpy as np
import pytest

from mcspoison import (
    SyntheticWorkerConfig,
    generate_synthetic_worker,
    preprocess,
    train_test_split,
)
from mcspoison.behavioral import train_behavioral_model


@pytest.fixture(scope="session")
def raw_worker():
    """One raw synthetic worker with missing cells, desk-scale row counts."""
    cfg = SyntheticWorkerConfig(seed=0, worker_id="w0", rows_per_class=(40, 24), missing_rate=0.05)
    return generate_synthetic_worker(cfg)


@pytest.fixture(scope="session")
def clean_dataset(raw_worker):
    """The same worker after impute -> balance -> normalize."""
    return preprocess(raw_worker, seed=0)


@pytest.fixture(scope="session")
def split_dataset(clean_dataset):
    return train_test_split(clean_dataset, 0.25, seed=1)


@pytest.fixture(scope="session")
def trained_model(split_dataset):
    """Cancellation classifier fit on the clean training split."""
    train, _ = split_dataset
    return train_behavioral_model(train, epochs=150, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
