from pathlib import Path

import numpy as np
import pytest

from rigidmotif.molgraph import read_sdf

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def corpus():
    return read_sdf(DATA / "corpus50.sdf")


@pytest.fixture(scope="session")
def conformers():
    return read_sdf(DATA / "conformers.sdf")


@pytest.fixture(scope="session")
def by_title(corpus):
    return {g.title: g for g in corpus}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
