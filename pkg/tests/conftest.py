import os
import sys

import numpy as np
import pytest

# リポジトリ直下を import パスに追加
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from modules.numerics import Rng  # noqa: E402


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240601)
