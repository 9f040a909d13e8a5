import numpy as np
import pytest

from tpshape.optical_system import PhaseScreen, SlmMask, compose_system, random_phase_screen
from tpshape.spdc_state import GaussianStateParams, Grid1D, build_state


@pytest.fixture
def grid256():
    return Grid1D(256, 2.56e-3)


def schmidt_state(grid, k_1d, diff_px=64.0, branch="narrow"):
    """State whose difference width is ``diff_px`` pixels, anticorrelated when ``branch='narrow'``."""
    # coarse on purpose: widths down to one pixel keep the unit tests fast
    params = GaussianStateParams.from_schmidt_1d(diff_px * grid.dx, k_1d, branch=branch)
    return build_state(params, grid, allow_truncation=True, samples_per_width=1.0)


def uniform_field(grid):
    return np.full(grid.n_points, 1.0 / np.sqrt(grid.extent), dtype=complex)


def flat_system(grid, n_segments, ell_px=1.0, seed=0):
    screen = random_phase_screen(grid, ell_px * grid.dx, seed) if ell_px else PhaseScreen.zero(grid)
    return compose_system(screen, SlmMask.flat(grid, n_segments))
