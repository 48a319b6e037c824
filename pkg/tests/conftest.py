import numpy as np
import pytest

from ucbench.grid import build_grid

MARGIN = 0.25  # interior band used by refinement studies


@pytest.fixture(scope="session")
def grid():
    return build_grid(1.0, 2.0, 65, 128)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(1.0, 2.0, 33, 64)


def grid_ladder(r0=1.0, R1=2.0, nr=17, nt=32, levels=3):
    g = build_grid(r0, R1, nr, nt)
    out = [g]
    for _ in range(levels - 1):
        g = g.refined()
        out.append(g)
    return out


def refinement_ratios(errors):
    e = np.asarray(errors, dtype=float)
    return e[:-1] / e[1:]


def interior_max(grid, values):
    mask = grid.interior_mask(MARGIN)
    return float(np.abs(values)[..., mask].max())
