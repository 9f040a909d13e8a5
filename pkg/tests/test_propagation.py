import numpy as np
import pytest

from conftest import flat_system, schmidt_state
from tpshape.errors import EmptyRegion, GridMismatch, ZeroMean
from tpshape.optical_system import PhaseScreen, SlmMask, compose_system
from tpshape.propagation import (
    IntensityProfile,
    central_region,
    coherent_modes,
    marginal_intensity,
    mean_envelope,
    propagate_two_photon,
    reduced_intensity,
    speckle_contrast,
)
from tpshape.spdc_state import Grid1D


@pytest.mark.parametrize("k", [1.0, 3.0, 10.0])
def test_mode_sum_matches_brute_force(k):
    grid = Grid1D(96, 96.0)
    state = schmidt_state(grid, k, diff_px=24.0)
    system = flat_system(grid, 12, ell_px=2.0, seed=3)
    psi_out = propagate_two_photon(state, system)
    assert psi_out.norm == pytest.approx(1.0, abs=1e-10)
    brute = marginal_intensity(psi_out).values
    fast = reduced_intensity(state, system, tolerance=0.0).values
    assert np.allclose(fast, brute, atol=1e-12 * brute.max() + 1e-14)
    truncated = reduced_intensity(state, system).values
    assert np.max(np.abs(truncated - brute)) <= 2e-6 * brute.sum()


def test_propagation_matches_matrix_product():
    grid = Grid1D(48, 48.0)
    state = schmidt_state(grid, 2.0, diff_px=12.0)
    system = flat_system(grid, 6, ell_px=2.0, seed=1)
    t = system.matrix
    assert np.allclose(propagate_two_photon(state, system).amplitude, t @ state.amplitude @ t.T)


def test_intensity_normalized():
    grid = Grid1D(128, 1.28e-3)
    state = schmidt_state(grid, 4.0, diff_px=32.0)
    profile = reduced_intensity(state, flat_system(grid, 16, seed=2))
    assert profile.total == pytest.approx(1.0, abs=1e-5)


def test_contrast_drops_with_k():
    grid = Grid1D(512, 512.0)
    system = flat_system(grid, 64, ell_px=1.0, seed=0)
    c1 = speckle_contrast(reduced_intensity(schmidt_state(grid, 1.0, 128.0), system), slice(192, 320))
    c16 = speckle_contrast(reduced_intensity(schmidt_state(grid, 16.0, 128.0), system), slice(192, 320))
    assert 0.7 < c1 < 1.3
    assert c16 < 0.5 * c1


def test_contrast_regions_and_errors():
    values = np.array([1.0, 3.0, 1.0, 3.0])
    assert speckle_contrast(values) == pytest.approx(0.5)
    assert speckle_contrast(values, np.array([True, True, False, False])) == pytest.approx(0.5)
    assert speckle_contrast(values, [0, 2]) == 0.0
    with pytest.raises(EmptyRegion):
        speckle_contrast(values, slice(2, 2))
    with pytest.raises(ZeroMean):
        speckle_contrast(np.zeros(4))
    assert speckle_contrast(IntensityProfile(Grid1D(4, 1.0), values)) == pytest.approx(0.5)


def test_grid_mismatch_rejected():
    grid = Grid1D(32, 32.0)
    state = schmidt_state(grid, 1.0, 8.0)
    other = Grid1D(32, 16.0)
    system = compose_system(PhaseScreen.zero(other), SlmMask.flat(other, 4))
    with pytest.raises(GridMismatch):
        propagate_two_photon(state, system)
    with pytest.raises(GridMismatch):
        reduced_intensity(state, system)


def test_envelope_and_region():
    grid = Grid1D(128, 128.0)
    modes = coherent_modes(schmidt_state(grid, 1.0, 24.0))
    env = mean_envelope(modes, [flat_system(grid, 8, ell_px=4.0, seed=s) for s in range(5)])
    region = central_region(env)
    assert region.any() and not region.all()
    assert env[region].min() > 0.5 * env.max()
    with pytest.raises(EmptyRegion):
        mean_envelope(modes, [])
