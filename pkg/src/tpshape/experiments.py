"""Seeded experiment orchestration behind the command-line interface.

Seed splitting: every random stream is a ``numpy.random.SeedSequence`` built
from the master seed and a spawn key,

* scatterer of repeat ``r``: ``(0, r)`` (shared by all Schmidt numbers),
* optimizer stream of sweep point ``(k_index, r)``: ``(1, k_index, r)``,
* envelope screens used to define the central camera region: ``(2, s)``,
* frame generation: ``(3,)``.

A ``scatterer.seed >= 0`` in the config replaces the master seed for the
scatterer streams only.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tpshape.config import ExperimentConfig
from tpshape.correlations import (
    DetectorParams,
    estimate_g2,
    g2_exact,
    map_to_csv,
    peak_metric,
    project,
    save_frames,
    simulate_frames,
)
from tpshape.matrix_io import save_tm
from tpshape.optical_system import PhaseScreen, SlmMask, compose_system, random_phase_screen
from tpshape.propagation import (
    OutputJointAmplitude,
    central_region,
    coherent_modes,
    mean_envelope,
    propagate_two_photon,
    reduced_intensity,
    speckle_contrast,
)
from tpshape.spdc_state import (
    GaussianStateParams,
    Grid1D,
    SpdcConfig,
    build_state,
    schmidt_decompose,
)
from tpshape.wavefront import (
    StateProbe,
    enhancement_factor,
    focus_mask,
    measure_tm,
    multi_target_mask,
    quadrant_pi_shift,
    sequential_optimize,
)

SWEEP_COLUMNS = ("k_1d", "seed", "value", "value_normalized", "aux")
AGGREGATE_COLUMNS = ("k_1d", "n", "mean", "std", "mean_normalized", "std_normalized")
CSV_SCHEMA_VERSION = 1
DEMO_FILES = (
    "intensities.csv",
    "masks.csv",
    "projections_minus.csv",
    "projections_sum.csv",
    "summary.json",
    "tm.bin",
)
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def grid_of(config: ExperimentConfig) -> Grid1D:
    return Grid1D(config.grid.n_points, config.grid.extent)


def near_field_params(config: ExperimentConfig, k_1d: float) -> GaussianStateParams:
    """Near-field (crystal image plane) widths for one sweep point."""
    s = config.state
    if s.crystal_length > 0:
        return GaussianStateParams.from_config(SpdcConfig(s.crystal_length, s.pump_wavelength, s.pump_waist))
    b = s.diff_width / FWHM_PER_SIGMA if s.width_reading == "fwhm" else s.diff_width
    if s.sum_width > 0:
        return GaussianStateParams(s.sum_width, b)
    return GaussianStateParams.from_schmidt_1d(b, k_1d, branch="wide")


def slm_params(config: ExperimentConfig, k_1d: float) -> GaussianStateParams:
    """Widths in the SLM/scatterer plane (after the optional Fourier relay)."""
    p = near_field_params(config, k_1d)
    f = config.state.relay_focal_length
    return p.fourier_relay(f, config.state.wavelength) if f > 0 else p


def decomposition_for(config: ExperimentConfig, k_1d: float):
    """Truncated Schmidt decomposition of the SLM-plane state.

    The grid edge acts as the physical aperture, so truncation is allowed.
    """
    state = build_state(slm_params(config, k_1d), grid_of(config), allow_truncation=True,
                        samples_per_width=config.grid.samples_per_width)
    return coherent_modes(schmidt_decompose(state))


def template_of(config: ExperimentConfig) -> SlmMask:
    ap = config.slm.aperture
    return SlmMask.flat(grid_of(config), config.slm.n_segments, ap if ap > 0 else None)


def screen_for(config: ExperimentConfig, repeat: int) -> PhaseScreen:
    sc = config.scatterer
    master = sc.seed if sc.seed >= 0 else config.run.seed
    seed = derive_seed(master, 0, repeat)
    return random_phase_screen(grid_of(config), sc.correlation_length, seed, sc.phase_std)


def camera_region(config: ExperimentConfig, coherent, template: SlmMask) -> np.ndarray:
    """Central camera region: where the seed-averaged coherent envelope exceeds half its peak."""
    sc = config.scatterer
    grid = grid_of(config)
    systems = (
        compose_system(random_phase_screen(grid, sc.correlation_length, derive_seed(config.run.seed, 2, s), sc.phase_std), template)
        for s in range(config.optimization.envelope_seeds)
    )
    return central_region(mean_envelope(coherent, systems))


def _pool_map(func, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


@dataclass(frozen=True)
class SweepResult:
    """Rows ``(k_1d, seed, value, value_normalized, aux)`` and per-K aggregates.

    ``value_normalized`` divides by the largest per-K mean; ``std`` is the
    population standard deviation of the raw values.
    """

    quantity: str
    rows: tuple
    aggregates: tuple

    @classmethod
    def from_points(cls, quantity: str, points) -> "SweepResult":
        points = sorted(points, key=lambda p: (p[0], p[1]))
        ks = sorted({p[0] for p in points})
        means = {k: float(np.mean([p[3] for p in points if p[0] == k])) for k in ks}
        scale = max(means.values())
        if not scale > 0:
            scale = 1.0
        rows = tuple((p[0], p[2], p[3], p[3] / scale, p[4]) for p in points)
        aggs = []
        for k in ks:
            v = np.array([r[2] for r in rows if r[0] == k])
            aggs.append((k, len(v), float(v.mean()), float(v.std()), means[k] / scale, float(v.std()) / scale))
        return cls(quantity, rows, tuple(aggs))

    def means(self) -> np.ndarray:
        return np.array([a[2] for a in self.aggregates])

    def k_values(self) -> np.ndarray:
        return np.array([a[0] for a in self.aggregates])

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / f"{self.quantity}.csv"
        agg_path = out / f"{self.quantity}_aggregates.csv"
        _write_csv(rows_path, SWEEP_COLUMNS, self.rows)
        _write_csv(agg_path, AGGREGATE_COLUMNS, self.aggregates)
        return rows_path, agg_path


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, columns, rows) -> None:
    lines = [f"# schema {CSV_SCHEMA_VERSION}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def sweep_contrast(config: ExperimentConfig) -> SweepResult:
    """Speckle contrast of the reduced intensity versus Schmidt number (flat SLM)."""
    ks = config.k_values_1d()
    template = template_of(config)
    region = camera_region(config, decomposition_for(config, 1.0), template)
    screens = [screen_for(config, r) for r in range(config.run.repeats)]
    points = []
    for k in ks:
        dec = decomposition_for(config, k)

        def point(r, dec=dec, k=k):
            profile = reduced_intensity(dec, compose_system(screens[r], template), tolerance=0.0)
            return (k, r, screens[r].seed, speckle_contrast(profile, region), dec.modes.shape[1])

        points += _pool_map(point, range(config.run.repeats), config.run.threads)
    return SweepResult.from_points("contrast", points)


def sweep_enhancement(config: ExperimentConfig) -> SweepResult:
    """Greedy optimization with K-state feedback, scored with a coherent probe.

    ``aux`` holds the feedback intensity gain seen during the optimization.
    """
    ks = config.k_values_1d()
    opt = config.optimization
    target = config.target
    template = template_of(config)
    coherent = decomposition_for(config, 1.0)
    region = camera_region(config, coherent, template)
    screens = [screen_for(config, r) for r in range(config.run.repeats)]
    points = []
    for ki, k in enumerate(ks):
        dec = decomposition_for(config, k)

        def point(r, dec=dec, k=k, ki=ki):
            screen = screens[r]
            probe = StateProbe(dec, screen, template, tolerance=0.0)
            trace = sequential_optimize(
                probe, target, opt.trial_phases, opt.iterations, rng_seed=derive_seed(config.run.seed, 1, ki, r)
            )
            eta = enhancement_factor(
                compose_system(screen, trace.mask), compose_system(screen, template), coherent, target, region
            )
            gain = trace.intensities[-1] / trace.initial_intensity if trace.initial_intensity > 0 else math.inf
            return (k, r, screen.seed, eta, float(gain))

        points += _pool_map(point, range(config.run.repeats), config.run.threads)
    return SweepResult.from_points("enhancement", points)


def cmd_sweep_contrast(config: ExperimentConfig, out_dir) -> SweepResult:
    result = sweep_contrast(config)
    result.write(out_dir)
    return result


def cmd_sweep_enhancement(config: ExperimentConfig, out_dir) -> SweepResult:
    result = sweep_enhancement(config)
    result.write(out_dir)
    return result


def pair_balanced_region(mask: SlmMask, marginal: np.ndarray, fraction: float = 0.25) -> range:
    """Segments right of the axis holding ``fraction`` of the single-photon weight.

    For pairs anticorrelated about the axis, flipping these segments by ``pi``
    flips the phase of half of the pair amplitude, the two-photon analog of
    shifting half of a coherent beam.
    """
    weights = np.real(mask.segment_sum(np.asarray(marginal, dtype=float)))
    x = mask.grid.x
    centres = np.real(mask.segment_sum(x.astype(float))) / np.maximum(np.bincount(mask.segment_index[mask.aperture], minlength=mask.n_segments), 1)
    start = int(np.searchsorted(centres, 0.0))
    goal = fraction * weights.sum()
    acc = 0.0
    stop = start
    while stop < mask.n_segments and acc + weights[stop] / 2 < goal:
        acc += weights[stop]
        stop += 1
    return range(start, stop)


def nulling_region(state, screen: PhaseScreen, correction: SlmMask, start: int) -> range:
    """Segments ``start..stop`` whose ``pi`` shift best cancels the coincidences at zero separation.

    The stop is scanned over every segment right of ``start``; the region that
    minimises the ``delta = 0`` value of the minus projection is the one
    carrying half of the pair amplitude that reaches the corrected peak.
    """
    best, best_stop = np.inf, start + 1
    for stop in range(start + 1, correction.n_segments + 1):
        shaped = quadrant_pi_shift(correction, range(start, stop))
        psi = propagate_two_photon(state, compose_system(screen, shaped)).amplitude
        value = float(np.sum(np.abs(np.diagonal(psi)) ** 2))
        if value < best:
            best, best_stop = value, stop
    return range(start, best_stop)


def _spot_targets(center: int, n: int) -> list:
    step = max(2, n // 32)
    return [center - 3 * step, center - step, center + step, center + 3 * step]


def demo_correction(config: ExperimentConfig) -> dict:
    """Coherent speckle, TM, focusing, spot shaping and correlation restoration on one seed.

    Returns a dict of arrays and scalars; :func:`cmd_demo_correction` writes it out.
    """
    grid = grid_of(config)
    n = grid.n_points
    target = config.target
    template = template_of(config)
    screen = screen_for(config, 0)
    flat = compose_system(screen, template)
    cc = config.correlation

    probe_dec = decomposition_for(config, config.state.probe_k)
    high_k = config.k_values_1d()[-1]
    state = build_state(slm_params(config, high_k), grid, allow_truncation=True,
                        samples_per_width=config.grid.samples_per_width)

    speckle = reduced_intensity(probe_dec, flat).values
    probe = StateProbe(probe_dec, screen, template)
    tm = measure_tm(probe, config.slm.phase_steps, config.slm.basis, block=config.slm.block, seed=screen.seed)
    correction = focus_mask(tm, target)
    focused = reduced_intensity(probe_dec, compose_system(screen, correction)).values
    spots = _spot_targets(target, n)
    multi = multi_target_mask(tm, spots)
    multi_i = reduced_intensity(probe_dec, compose_system(screen, multi)).values
    half = quadrant_pi_shift(correction, range(0, template.n_segments // 2))
    half_i = reduced_intensity(probe_dec, compose_system(screen, half)).values

    marginal = np.sum(np.abs(state.amplitude) ** 2, axis=1)
    region = nulling_region(state, screen, correction, pair_balanced_region(template, marginal).start)
    shaped = quadrant_pi_shift(correction, region)

    none = PhaseScreen.zero(grid)
    tm_none = measure_tm(StateProbe(probe_dec, none, template), config.slm.phase_steps, config.slm.basis, block=config.slm.block)
    cases = {
        "no_medium_flat": compose_system(none, template),
        "no_medium_corrected": compose_system(none, focus_mask(tm_none, target)),
        "scatterer_flat": flat,
        "scatterer_corrected": compose_system(screen, correction),
        "scatterer_pi_shift": compose_system(screen, shaped),
    }
    minus, sums, metrics = {}, {}, {}
    for name, system in cases.items():
        g2 = g2_exact(propagate_two_photon(state, system))
        minus[name] = project(g2, "minus")
        sums[name] = project(g2, "sum")
        metrics[name] = peak_metric(minus[name], cc.peak_halfwidth, cc.background_outer)

    centre = n - 1
    corrected = minus["scatterer_corrected"].values
    pi_vals = minus["scatterer_pi_shift"].values
    summary = {
        "seed": config.run.seed,
        "screen_seed": screen.seed,
        "target": target,
        "k_1d": high_k,
        "probe_k_1d": config.state.probe_k,
        "probe_modes": int(probe_dec.modes.shape[1]),
        "n_segments": template.n_segments,
        "tm_acquisitions": tm.n_acquisitions,
        "peak_halfwidth": cc.peak_halfwidth,
        "background_outer": cc.background_outer,
        "peak_metric": metrics,
        "restoration_ratio": metrics["scatterer_corrected"] / metrics["scatterer_flat"],
        "coherent_enhancement": float(focused[target] / speckle.mean()),
        "spot_targets": spots,
        "half_pi_focus_ratio": float(half_i[target] / focused[target]),
        "pi_region": [region.start, region.stop],
        "pi_null_ratio": float(pi_vals[centre] / corrected[centre]),
    }
    return {
        "summary": summary,
        "tm": tm,
        "intensities": {"speckle": speckle, "focused": focused, "multi_spot": multi_i, "half_pi": half_i},
        "masks": {"correction": correction, "multi_spot": multi, "pi_shift": shaped},
        "minus": minus,
        "sum": sums,
    }


def _write_columns(path: Path, header, columns) -> None:
    cols = [np.asarray(c) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_demo_correction(config: ExperimentConfig, out_dir) -> dict:
    result = demo_correction(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inten = result["intensities"]
    _write_columns(out / "intensities.csv", ["pixel", *inten], [np.arange(len(inten["speckle"])), *inten.values()])
    masks = result["masks"]
    _write_columns(out / "masks.csv", ["segment", *masks],
                   [np.arange(masks["correction"].n_segments), *(m.segment_phases for m in masks.values())])
    for coord in ("minus", "sum"):
        projs = result[coord]
        first = next(iter(projs.values()))
        _write_columns(out / f"projections_{coord}.csv", ["offset", *projs],
                       [first.offsets, *(p.values for p in projs.values())])
    save_tm(result["tm"], out / "tm.bin")
    (out / "summary.json").write_text(json.dumps(result["summary"], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return result


def cmd_tm(config: ExperimentConfig, save_path) -> dict:
    """Measure the TM of the probe state through the configured scatterer and save it."""
    template = template_of(config)
    screen = screen_for(config, 0)
    probe = StateProbe(decomposition_for(config, config.state.probe_k), screen, template)
    tm = measure_tm(probe, config.slm.phase_steps, config.slm.basis, block=config.slm.block, seed=screen.seed)
    save_tm(tm, save_path)
    return {"rows": tm.shape[0], "cols": tm.shape[1], "basis": tm.basis, "seed": tm.seed,
            "acquisitions": tm.n_acquisitions}


def frame_experiment(config: ExperimentConfig, threads: int = 1) -> dict:
    """Exact and frame-estimated correlations of a pair source imaged onto the camera.

    The grid is ``detector.n_points`` pixels of unit pitch; the state has a
    difference width of ``n / 16`` pixels and Schmidt number ``detector.k_1d``.
    """
    det = config.detector
    n = det.n_points
    grid = Grid1D(n, float(n))
    params = GaussianStateParams.from_schmidt_1d(n / 16.0, det.k_1d, branch="wide")
    state = build_state(params, grid, allow_truncation=True)
    exact = g2_exact(OutputJointAmplitude(grid, state.amplitude))
    detector = DetectorParams(det.mu_pair, det.p_dark, det.threshold)
    stack = simulate_frames(exact, detector, det.n_frames, derive_seed(config.run.seed, 3), threads=threads)
    estimate = estimate_g2(stack, grid, threads=threads, background=det.background)
    off = ~np.eye(n, dtype=bool)
    e, x = estimate.values[off], exact.values[off]
    scale = float(e @ x / (x @ x))
    rel = float(np.linalg.norm(e - scale * x) / np.linalg.norm(scale * x))
    summary = {"n_frames": det.n_frames, "n_pixels": n, "k_1d": det.k_1d, "scale": scale,
               "relative_l2_offdiagonal": rel, "mean_counts_per_frame": float(stack.frames.sum() / max(stack.n_frames, 1))}
    return {"summary": summary, "stack": stack, "exact": exact, "estimate": estimate}


def cmd_g2_frames(config: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    result = frame_experiment(config, threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_frames(result["stack"], out / "frames.bin")
    map_to_csv(result["exact"], out / "g2_exact.csv")
    map_to_csv(result["estimate"], out / "g2_estimate.csv")
    (out / "summary.json").write_text(json.dumps(result["summary"], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return result
