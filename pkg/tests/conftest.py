"""Shared fixtures: seeded generators, double precision and a tiny synthetic dataset."""

import numpy as np
import pytest

from modeseg.autodiff import precision
from modeseg.config import ConfigProfiles
from modeseg.core.datapipe import load_tiles, prepare_stratified


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    """Run the test body with 64-bit tensors (gradient checks need the headroom)."""
    with precision(np.float64):
        yield


@pytest.fixture(scope="session")
def smoke_config():
    return ConfigProfiles.smoke()


@pytest.fixture(scope="session")
def smoke_dataset(smoke_config):
    return load_tiles(smoke_config.data)


@pytest.fixture(scope="session")
def smoke_splits(smoke_dataset, smoke_config):
    return prepare_stratified(smoke_dataset, smoke_config.data)


@pytest.fixture(autouse=True)
def _isolated_run_root(tmp_path, monkeypatch):
    """Keep CLI runs out of the working tree."""
    monkeypatch.setenv("MODESEG_RUN_ROOT", str(tmp_path / "runs"))
    for name in ("MODESEG_SEED", "MODESEG_TILE_SIZE", "MODESEG_WORKERS"):
        monkeypatch.delenv(name, raising=False)
    yield
