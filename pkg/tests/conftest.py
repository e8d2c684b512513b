import numpy as np
import pytest
from hypothesis import settings

from misclass_sdm.core import StateSpace
from misclass_sdm.dataset import Dataset

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

#: filled by the acceptance tests, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def make_dataset(verified, reported, space, x=None, z=None, holdout=None, scores=None):
    n = len(reported)
    return Dataset(
        space=space,
        site_id=np.array([f"r{i}" for i in range(n)]),
        x=np.zeros((n, 0)) if x is None else x,
        z=np.zeros((n, 0)) if z is None else z,
        verified=np.asarray(verified),
        reported=np.asarray(reported),
        holdout=np.zeros(n, dtype=bool) if holdout is None else holdout,
        scores=scores,
    )


def crosstab_dataset(counts, space, x_cols=0, z_cols=0, seed=0):
    """Records whose (verified, reported) cross-tab equals ``counts``."""
    counts = np.asarray(counts)
    v, y = [], []
    for s in range(counts.shape[0]):
        for k in range(counts.shape[1]):
            v += [s] * int(counts[s, k])
            y += [k] * int(counts[s, k])
    rng = np.random.default_rng(seed)
    n = len(v)
    return make_dataset(v, y, space, x=rng.normal(size=(n, x_cols)), z=rng.normal(size=(n, z_cols)))


@pytest.fixture
def space23():
    return StateSpace(("s1", "s2"), ("s1", "s2", "other"))
