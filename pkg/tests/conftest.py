import numpy as np
import pytest

from spcmh.dataio import assign_split, normalize_center, synth_clusters
from spcmh.model import Hyperparams, train


def random_spd(rng, n, shift=1.0):
    M = rng.standard_normal((n, n))
    return M @ M.T + shift * np.eye(n)


def random_sym(rng, n):
    M = rng.standard_normal((n, n))
    return 0.5 * (M + M.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic():
    """The desk-scale synthetic benchmark: 10 clusters x 80, 600 train / 200 query."""
    data = assign_split(synth_clusters(10, 80, 20, 30, 0.1, seed=0), n_query=200, seed=0)
    prepped, stats = normalize_center(data)
    return data, prepped, stats


@pytest.fixture(scope="session")
def trained_default(synthetic):
    data, prepped, stats = synthetic
    tr = data.train_idx
    model, report = train(
        prepped.X[:, tr], prepped.Y[:, tr], Hyperparams(seed=0), mean_x=stats.mean_x, mean_y=stats.mean_y
    )
    return model, report


# criterion number -> (status, description, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        status, desc, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{status}] criterion {num:>2}: {desc} -- {detail}")
