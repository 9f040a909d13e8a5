import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import flat_system, schmidt_state
from tpshape.correlations import (
    DetectorParams,
    FrameStack,
    G2Map,
    G2Projection,
    estimate_g2,
    g2_exact,
    load_frames,
    lowpass_denoise,
    map_to_csv,
    peak_metric,
    project,
    projection_to_csv,
    save_frames,
    simulate_frames,
)
from tpshape.errors import DegenerateBackground, FormatError, InvalidDetectorParams, TooFewFrames
from tpshape.propagation import OutputJointAmplitude, propagate_two_photon
from tpshape.spdc_state import Grid1D


def identity_output(state):
    return OutputJointAmplitude(state.grid, state.amplitude)


def test_g2_symmetric_and_normalized():
    grid = Grid1D(64, 64.0)
    state = schmidt_state(grid, 5.0, 8.0, branch="wide")
    g2 = g2_exact(propagate_two_photon(state, flat_system(grid, 8, ell_px=2.0)))
    assert np.max(np.abs(g2.values - g2.values.T)) < 1e-12 * g2.values.max()
    assert g2.values.sum() * grid.dx**2 == pytest.approx(1.0, abs=1e-9)


def test_identity_channel_minus_peak_width():
    grid = Grid1D(256, 256.0)
    b = 3.0
    state = schmidt_state(grid, 20.0, b, branch="wide")
    proj = project(g2_exact(identity_output(state)), "minus")
    assert proj.total == pytest.approx(1.0, abs=1e-9)
    assert np.all(proj.values >= 0)
    assert proj.offsets[np.argmax(proj.values)] == 0
    half = proj.values.max() / 2
    above = proj.offsets[proj.values >= half]
    # discrete FWHM from linear interpolation on the positive flank
    pos = proj.values[proj.offsets >= 0]
    edge = np.interp(half, pos[::-1], np.arange(len(pos))[::-1])
    assert 2 * edge == pytest.approx(2 * b * np.sqrt(2 * np.log(2)), rel=0.05)
    assert above.min() == -above.max()


def test_rank_one_state_gives_intensity_autocorrelation():
    grid = Grid1D(64, 64.0)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    u /= np.sqrt(np.sum(np.abs(u) ** 2))
    psi = np.outer(u, u)
    system = flat_system(grid, 8, ell_px=2.0, seed=1)
    out = system.matrix @ psi @ system.matrix.T
    proj = project(g2_exact(OutputJointAmplitude(grid, out)), "minus")
    i = np.abs(system.matrix @ u) ** 2
    auto = np.correlate(i, i, mode="full")
    assert np.allclose(proj.values, auto / auto.sum(), atol=1e-12)


def test_sum_projection_of_anticorrelated_pairs():
    grid = Grid1D(128, 128.0)
    state = schmidt_state(grid, 12.0, 40.0, branch="narrow")
    proj = project(g2_exact(identity_output(state)), "sum")
    assert proj.offsets[np.argmax(proj.values)] in (-1, 0, 1)
    assert proj.total == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        project(g2_exact(identity_output(state)), "diagonal")


def _proj(values):
    n = (len(values) + 1) // 2
    return G2Projection("minus", np.arange(-(n - 1), n), np.asarray(values, dtype=float))


def test_peak_metric_flat_and_degenerate():
    assert peak_metric(_proj(np.ones(127)), 4) == pytest.approx(1.0)
    delta = np.zeros(127)
    delta[63] = 1.0
    with pytest.raises(DegenerateBackground):
        peak_metric(_proj(delta), 4)
    with pytest.raises(ValueError):
        peak_metric(_proj(np.ones(127)), 20)


def test_peak_metric_annulus():
    values = np.ones(255)
    values[127] = 11.0
    values[np.abs(np.arange(-127, 128)) > 16] = 100.0
    assert peak_metric(_proj(values), 0, outer=None) == pytest.approx(11.0 / 100.0)
    assert peak_metric(_proj(values), 0, outer=16) == pytest.approx(11.0)


def test_lowpass_identity_and_mass():
    rng = np.random.default_rng(0)
    p = _proj(rng.random(255))
    assert np.array_equal(lowpass_denoise(p, 1.0).values, p.values)
    for cut in (0.5, 0.1, 0.02):
        assert lowpass_denoise(p, cut).total == pytest.approx(p.total, abs=1e-9)
    with pytest.raises(ValueError):
        lowpass_denoise(p, 0.0)


def test_lowpass_white_noise_variance():
    rng = np.random.default_rng(1)
    ratios = []
    for _ in range(40):
        p = _proj(rng.standard_normal(1023))
        ratios.append(np.var(p.values) / np.var(lowpass_denoise(p, 0.1).values))
    assert np.mean(ratios) == pytest.approx(10.0, rel=0.3)


def test_detector_validation():
    with pytest.raises(InvalidDetectorParams):
        DetectorParams(mu_pair=-0.1)
    with pytest.raises(InvalidDetectorParams):
        DetectorParams(p_dark=1.0)


def _small_map(n=16, k=3.0):
    grid = Grid1D(n, float(n))
    return g2_exact(identity_output(schmidt_state(grid, k, n / 8, branch="wide")))


def test_zero_rates_give_zero_frames():
    stack = simulate_frames(_small_map(), DetectorParams(0.0, 0.0), 500, 1)
    assert stack.frames.shape == (500, 16) and not stack.frames.any()


def test_frames_deterministic_and_thread_independent():
    g2 = _small_map()
    a = simulate_frames(g2, DetectorParams(), 20000, 9)
    b = simulate_frames(g2, DetectorParams(), 20000, 9, threads=3)
    assert np.array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, simulate_frames(g2, DetectorParams(), 20000, 10).frames)
    ea, eb = estimate_g2(a), estimate_g2(a, threads=4)
    assert np.array_equal(ea.values, eb.values)


def test_mean_rate_matches_model():
    g2 = _small_map()
    det = DetectorParams(mu_pair=0.2, p_dark=1e-3, threshold=False)
    m = 100000
    frames = simulate_frames(g2, det, m, 5).frames.astype(float)
    p = g2.values / g2.values.sum()
    marginal = p.sum(axis=0) + p.sum(axis=1)
    expected = det.mu_pair * marginal - np.log1p(-det.p_dark)
    se = frames.std(axis=0) / np.sqrt(m)
    assert np.all(np.abs(frames.mean(axis=0) - expected) < 3 * se + 1e-12)


def test_dark_only_estimate_is_zero():
    g2 = _small_map()
    m = 100000
    stack = simulate_frames(g2, DetectorParams(0.0, 0.05), m, 2)
    est = estimate_g2(stack).values
    x = stack.frames.astype(float)
    terms = x[:-1, 0] * x[:-1, 1] - x[:-1, 0] * x[1:, 1]
    se = terms.std() / np.sqrt(m - 1)
    off = ~np.eye(16, dtype=bool)
    assert abs(est[off].mean()) < 3 * se


def test_estimate_boundary_and_errors():
    g2 = _small_map()
    stack = simulate_frames(g2, DetectorParams(1.0, 0.1), 2, 0)
    assert np.all(np.isfinite(estimate_g2(stack).values))
    with pytest.raises(TooFewFrames):
        estimate_g2(FrameStack(stack.frames[:1], stack.detector, 0))


def test_estimator_tracks_exact_map():
    n = 64
    g2 = _small_map(n, k=8.0)
    stack = simulate_frames(g2, DetectorParams(), 300000, 4)
    est = estimate_g2(stack, g2.grid)
    off = ~np.eye(n, dtype=bool)
    e, x = est.values[off], g2.values[off]
    assert np.corrcoef(e, x)[0, 1] > 0.8


@settings(max_examples=10, deadline=None)
@given(n_frames=st.integers(0, 40), seed=st.integers(0, 2**63 - 1))
def test_frame_file_roundtrip(tmp_path_factory, n_frames, seed):
    stack = simulate_frames(_small_map(8), DetectorParams(0.5, 0.01), n_frames, seed)
    path = tmp_path_factory.mktemp("frames") / "f.bin"
    save_frames(stack, path)
    back = load_frames(path)
    assert np.array_equal(back.frames, stack.frames)
    assert back.detector == stack.detector and back.seed == seed


def test_frame_file_errors(tmp_path):
    stack = simulate_frames(_small_map(8), DetectorParams(), 10, 0)
    path = tmp_path / "f.bin"
    save_frames(stack, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        load_frames(path)
    path.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(FormatError):
        load_frames(path)


def test_csv_exports(tmp_path):
    g2 = _small_map(8)
    map_to_csv(g2, tmp_path / "g2.csv")
    assert np.allclose(np.loadtxt(tmp_path / "g2.csv", delimiter=","), g2.values, rtol=1e-15)
    proj = project(g2, "minus")
    projection_to_csv(proj, tmp_path / "p.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "offset,minus" and len(rows) == 16
    assert isinstance(G2Map(g2.grid, g2.values), G2Map)


def test_mean_background_agrees_with_next_frame():
    n = 32
    g2 = _small_map(n, k=6.0)
    stack = simulate_frames(g2, DetectorParams(), 200000, 8)
    off = ~np.eye(n, dtype=bool)
    nxt = estimate_g2(stack, background="next").values[off]
    mean = estimate_g2(stack, background="mean", threads=3).values[off]
    assert np.corrcoef(nxt, mean)[0, 1] > 0.95
    assert np.corrcoef(mean, g2.values[off])[0, 1] > 0.8
    with pytest.raises(ValueError):
        estimate_g2(stack, background="median")
