import numpy as np
import pytest

from boxabs.synthetic import box_mesh


@pytest.fixture()
def unit_cube():
    """Closed unit cube spanning [0, 1]^3."""
    return box_mesh([0.5, 0.5, 0.5], [0.5, 0.5, 0.5])


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


UNIT_CUBE_OFF = """OFF
8 12 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 2 3 7
3 2 7 6
3 0 4 7
3 0 7 3
3 1 2 6
3 1 6 5
"""


@pytest.fixture()
def unit_cube_off(tmp_path):
    path = tmp_path / "cube.off"
    path.write_text(UNIT_CUBE_OFF)
    return path
