import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpshape.errors import ConfigError, InfiniteWidth, TruncatedState, UndersampledGrid, ZeroIntensity
from tpshape.spdc_state import (
    GaussianStateParams,
    Grid1D,
    SpdcConfig,
    TwoPhotonState,
    build_state,
    g1_analytic,
    g1_coefficient,
    g1_coefficient_params,
    g1_fwhm,
    g1_numeric,
    reduced_density_matrix,
    schmidt_decompose,
    schmidt_number_1d,
    schmidt_number_analytic,
    sigma_p,
    sigma_r,
)


def test_widths_from_optics():
    cfg = SpdcConfig(1e-3, 406e-9, 1e-3)
    assert sigma_p(cfg) == pytest.approx(0.5e3)
    assert sigma_r(cfg) == pytest.approx(math.sqrt(1e-3 * 406e-9 / (6 * math.pi)))
    params = GaussianStateParams.from_config(cfg)
    assert params.sum_width == pytest.approx(2e-3)


def test_reported_coherence_width():
    cfg = SpdcConfig(1e-3, 406e-9, 1e-3)
    assert g1_coefficient(cfg) == pytest.approx(2.3214e10, rel=1e-4)
    assert g1_fwhm(cfg) == pytest.approx(10.93e-6, abs=0.01e-6)


def test_coefficient_forms_agree():
    cfg = SpdcConfig(2e-3, 405e-9, 0.3e-3)
    assert g1_coefficient_params(GaussianStateParams.from_config(cfg)) == pytest.approx(g1_coefficient(cfg), rel=1e-12)


def test_equal_widths_have_no_coherence_length():
    # A == B: 24 pi w^2 == L lambda
    w = math.sqrt(1e-3 * 400e-9 / (24 * math.pi))
    with pytest.raises(InfiniteWidth):
        g1_fwhm(SpdcConfig(1e-3, 400e-9, w))


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ConfigError):
        SpdcConfig(bad, 400e-9, 1e-3)


def test_schmidt_number_identities():
    cfg = SpdcConfig(1e-3, 406e-9, 1e-3)
    p = GaussianStateParams.from_config(cfg)
    assert schmidt_number_analytic(cfg) == pytest.approx(p.schmidt_number_2d, rel=1e-12)
    assert schmidt_number_1d(cfg) ** 2 == pytest.approx(schmidt_number_analytic(cfg), rel=1e-12)


@given(k=st.floats(1.0, 50.0), branch=st.sampled_from(["wide", "narrow"]))
def test_from_schmidt_roundtrip(k, branch):
    p = GaussianStateParams.from_schmidt_1d(1e-4, k, branch)
    assert p.schmidt_number_1d == pytest.approx(k, rel=1e-9)
    assert (p.sum_width >= p.diff_width) == (branch == "wide") or k == 1.0


@given(k=st.floats(1.0, 50.0), f=st.floats(0.1, 5.0))
def test_fourier_relay_preserves_k_and_swaps_roles(k, f):
    p = GaussianStateParams.from_schmidt_1d(1e-4, k, "wide")
    q = p.fourier_relay(f, 800e-9)
    assert q.schmidt_number_1d == pytest.approx(k, rel=1e-9)
    assert q.sum_width <= q.diff_width * (1 + 1e-12)


def test_build_state_normalized():
    grid = Grid1D(128, 1.28e-3)
    state = build_state(GaussianStateParams(2e-4, 4e-5), grid)
    assert state.norm == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(state.amplitude, state.amplitude.T)


def test_build_state_errors():
    grid = Grid1D(64, 1e-3)
    with pytest.raises(UndersampledGrid):
        build_state(GaussianStateParams(1e-4, 1e-6), grid)
    with pytest.raises(TruncatedState):
        build_state(GaussianStateParams(5e-3, 1e-4), grid)
    fine = Grid1D(256, 256.0)
    build_state(GaussianStateParams(30.0, 3.0), fine)
    with pytest.raises(UndersampledGrid):
        build_state(GaussianStateParams(30.0, 2.9), fine)
    build_state(GaussianStateParams(30.0, 1.0), fine, samples_per_width=1.0)
    with pytest.raises(ConfigError):
        build_state(GaussianStateParams(30.0, 3.0), fine, samples_per_width=0.0)
    state = build_state(GaussianStateParams(5e-3, 1e-4), grid, allow_truncation=True)
    assert state.norm == pytest.approx(1.0)


def test_state_shape_checked():
    with pytest.raises(ValueError):
        TwoPhotonState(Grid1D(4, 1.0), np.zeros((3, 3)))


@settings(max_examples=15, deadline=None)
@given(k=st.floats(1.0, 12.0))
def test_svd_schmidt_number_matches_analytic(k):
    grid = Grid1D(1024, 256.0)
    p = GaussianStateParams.from_schmidt_1d(8.0 / math.sqrt(k), k, "wide")
    dec = schmidt_decompose(build_state(p, grid))
    assert dec.schmidt_number == pytest.approx(k, rel=1e-2)


def test_schmidt_eigenvalues_geometric():
    grid = Grid1D(256, 256.0)
    p = GaussianStateParams(24.0, 6.0)
    dec = schmidt_decompose(build_state(p, grid))
    ratio = ((p.sum_width - p.diff_width) / (p.sum_width + p.diff_width)) ** 2
    lam = dec.coefficients[:6]
    assert np.allclose(lam[1:] / lam[:-1], ratio, rtol=1e-6)
    assert dec.coefficients.sum() == pytest.approx(1.0, abs=1e-12)


def test_decomposition_reconstructs_state():
    grid = Grid1D(96, 96.0)
    state = build_state(GaussianStateParams(12.0, 3.0), grid)
    dec = schmidt_decompose(state)
    rebuilt = (dec.modes * np.sqrt(dec.coefficients)) @ dec.partners.T
    assert np.allclose(rebuilt, state.amplitude, atol=1e-10)
    modes, coeffs = dec
    assert np.allclose(modes.conj().T @ modes * grid.dx, np.eye(len(coeffs)), atol=1e-10)


def test_truncation_keeps_weight():
    grid = Grid1D(128, 128.0)
    dec = schmidt_decompose(build_state(GaussianStateParams(30.0, 3.0), grid))
    t = dec.truncated(1e-6)
    assert t.coefficients.sum() >= 1 - 1e-6
    assert t.modes.shape[1] < dec.modes.shape[1]


def test_reduced_density_trace():
    grid = Grid1D(128, 64.0)
    state = build_state(GaussianStateParams(8.0, 2.0), grid)
    rho = reduced_density_matrix(state)
    assert np.trace(rho).real * grid.dx == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(rho, rho.conj().T)


def test_g1_numeric_matches_analytic():
    cfg = SpdcConfig(1e-3, 406e-9, 1e-3)
    p = GaussianStateParams.from_config(cfg)
    grid = Grid1D(512, 0.4e-3)
    state = build_state(p, grid, allow_truncation=True)
    fw = g1_fwhm(cfg)
    r = grid.x[(grid.x > 0) & (grid.x <= 2 * fw)]
    assert np.max(np.abs(g1_numeric(state, r) - g1_analytic(cfg, r))) < 1e-3


def test_g1_numeric_zero_intensity():
    grid = Grid1D(256, 256.0)
    state = build_state(GaussianStateParams(3.0, 3.0), grid)
    with pytest.raises(ZeroIntensity):
        g1_numeric(state, grid.x[-1])
