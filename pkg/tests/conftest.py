import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_type(rng, n, k):
    """Random n-type on k symbols (uniform over compositions is not needed)."""
    from vlcc.types_core import Distribution

    cuts = np.sort(rng.integers(0, n + 1, size=k - 1))
    counts = np.diff(np.concatenate(([0], cuts, [n])))
    return Distribution.from_counts(counts)
