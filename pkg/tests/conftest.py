import numpy as np
import pytest

from _builders import table1_schema as _table1_schema

# Table 1-style example: feature order, both reference vectors, accuracies.
TABLE1_ARCH1 = np.array([1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1], dtype=np.uint8)
TABLE1_ARCH2 = np.array([0, 1, 1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 1], dtype=np.uint8)
TABLE1_ACCURACIES = (92.50, 93.20)


@pytest.fixture
def table1_schema():
    return _table1_schema()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
