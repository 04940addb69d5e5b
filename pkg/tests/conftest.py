from __future__ import annotations

import numpy as np
import pytest

from tests.helpers import nonnegative_low_rank


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def low_rank_50x40() -> np.ndarray:
    return nonnegative_low_rank(7, 50, 40, 3)
