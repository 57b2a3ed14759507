import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stlgcp.core import GridSpec, ObservationWindow  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_square():
    return ObservationWindow.rectangle(0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def square10():
    return ObservationWindow.rectangle(0.0, 0.0, 10.0, 10.0)


@pytest.fixture
def pentagon():
    return ObservationWindow(np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 7.0], [6.0, 10.0], [0.0, 9.0]]))


@pytest.fixture
def grid10(square10):
    return GridSpec.from_window(square10, 16, 16)


SMALL_CONFIG = """\
seed = 3

[paths]
pattern = "pattern.csv"
window = "window.csv"
out = "out"

[data]
holdout = 2

[grid]
m = 16
p = 16

[glm]
seasons = false
harmonics = false

[summaries]
r_max = 1.25
u_max = 3.0
n_perm = 10
n_sim = 10
v_max = 5

[covfit]
v_range = [1, 4]

[mala]
n_iter = 300
zeta = 4

[forecast]
deltas = [1, 2]

[simulate]
n_realizations = 2
n_sim = 10
"""


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A 20-day synthetic dataset and a fast configuration; returns the directory."""
    from stlgcp.datasets import write_synthetic

    d = tmp_path_factory.mktemp("small")
    write_synthetic(d, seed=3, n_days=20, m=16, base_rate=80.0)
    (d / "config.toml").write_text(SMALL_CONFIG)
    return d
