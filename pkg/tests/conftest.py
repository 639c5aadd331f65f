import numpy as np
import pytest

from tarot.geometry import BinaryMask


def mask_from_rows(rows) -> BinaryMask:
    """Build a mask from strings, '#' marking foreground pixels."""
    grid = [[c == "#" for c in row] for row in rows]
    return BinaryMask(np.array(grid, dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


@pytest.fixture(scope="session")
def suite_dir(tmp_path_factory):
    """A small generated scenario suite shared by end-to-end tests."""
    from tarot.scenarios import generate_scenarios

    root = tmp_path_factory.mktemp("suite")
    generate_scenarios(root, seed=5, count=6,
                       fault_mix={"none": 2, "under": 2, "over": 2})
    return root
