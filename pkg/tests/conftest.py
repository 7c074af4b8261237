import numpy as np
import pytest

from plaplace.grid import Grid, GridFunction, RectDomain


@pytest.fixture
def unit_grid():
    return Grid(RectDomain(1.0, 1.0), 16, 16)


def band_limited(grid: Grid, rng: np.random.Generator, kmax: int = 4) -> GridFunction:
    """Random smooth cosine mixture (not mean-zero projected)."""
    X, Y = grid.node_coords()
    sx = (X - grid.domain.origin[0]) / grid.domain.a
    sy = (Y - grid.domain.origin[1]) / grid.domain.b
    vals = np.zeros(grid.node_shape)
    for m in range(kmax + 1):
        for n in range(kmax + 1):
            if m + n == 0:
                continue
            vals += rng.standard_normal() / (1.0 + m + n) ** 2 * np.cos(np.pi * n * sx) * np.cos(
                np.pi * m * sy
            )
    return GridFunction(grid, vals)
