"""Transmission-matrix measurement, focusing masks and sequential optimization.

TM acquisition follows the usual phase-stepping recipe: part of the SLM is a
static reference, the rest displays a basis pattern whose global phase is
stepped through ``phase_steps`` values.  The demodulated quantity per camera
pixel ``m`` is ``conj(s_m) * (t_m . v)`` where ``s_m`` is the reference field,
so every row of the measured matrix carries an unknown reference phase that
phase conjugation cancels.

A phase-only SLM cannot switch segments off, so pixel-basis vectors are
obtained as half the difference of two unit-modulus patterns
(all-zero phase minus all-zero with ``pi`` on one segment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from tpshape.errors import (
    BasisSizeMismatch,
    EmptyTargets,
    ProbeFailure,
    RegionOutOfRange,
    TargetOutOfRange,
    ZeroMean,
)
from tpshape.optical_system import (
    PhaseScreen,
    SlmMask,
    SystemOperator,
    fourier_propagate,
    wrap_phase,
)
from tpshape.propagation import MODE_TOLERANCE, camera_intensity, coherent_modes, reduced_intensity


class StateProbe:
    """Camera intensity of a (partially coherent) two-photon beam versus SLM phases.

    This is the intensity-feedback channel used for TM measurement and
    optimization: the reduced single-photon intensity of ``state`` after the
    SLM ``template`` (with the given segment phases), the ``screen`` and the
    Fourier lens.
    """

    def __init__(self, state, screen: PhaseScreen, template: SlmMask, tolerance: float = MODE_TOLERANCE):
        modes = coherent_modes(state, tolerance)
        self.template = template
        self.grid = template.grid
        self.n_modes = modes.modes.shape[1]
        self._fields = screen.transmission[:, None] * modes.weighted_modes()
        self.n_calls = 0

    @property
    def n_segments(self) -> int:
        return self.template.n_segments

    @property
    def n_pixels(self) -> int:
        return self.grid.n_points

    def intensity(self, phases) -> np.ndarray:
        self.n_calls += 1
        factor = self.template.with_phases(phases).pixel_factor()
        return camera_intensity(self._fields, factor)

    def target_fields(self, target: int):
        """Per-segment field contributions at camera pixel ``target``.

        Returns ``(D, R)`` with ``D[j, n]`` the field of mode ``n`` through
        segment ``j`` (flat phase) and ``R[n]`` the unmodulated remainder, so
        the target field of mode ``n`` is ``R[n] + sum_j D[j, n] exp(i theta_j)``.
        """
        n = self.grid.n_points
        _check_target(target, n)
        c = (n - 1) / 2.0
        row = np.exp(-2j * np.pi * (target - c) * (np.arange(n) - c) / n) / math.sqrt(n)
        contrib = row[:, None] * self._fields
        d = self.template.segment_sum(contrib)
        r = contrib[~self.template.aperture].sum(axis=0)
        return d, r


class CallableProbe:
    """Wrap ``func(phases) -> intensity`` as a probe."""

    def __init__(self, func, n_segments: int, template: SlmMask | None = None):
        self._func = func
        self.template = template
        self._n_segments = n_segments

    @property
    def n_segments(self) -> int:
        return self._n_segments

    def intensity(self, phases) -> np.ndarray:
        return np.asarray(self._func(phases), dtype=float)


def _check_target(target, n):
    if not (isinstance(target, (int, np.integer)) and 0 <= target < n):
        raise TargetOutOfRange(f"camera pixel {target!r} outside [0, {n})")


@dataclass(frozen=True, eq=False)
class TransmissionMatrix:
    """Measured TM, ``entries[m, j]`` for camera pixel ``m`` and SLM segment ``j``.

    Columns of segments that were never modulated are zero.
    """

    entries: np.ndarray
    basis: str
    modulated: tuple
    phase_steps: int
    seed: int | None = None
    template: SlmMask | None = None
    reference: str = "alternating"
    n_acquisitions: int = 0

    @property
    def shape(self):
        return self.entries.shape

    def row(self, target: int) -> np.ndarray:
        _check_target(target, self.entries.shape[0])
        return self.entries[target]


def _alternating_groups(n_segments: int, block: int) -> np.ndarray:
    return (np.arange(n_segments) // block) % 2


def _demodulate(probe, phases_base, modulated, pattern, steps):
    acc = None
    for k in range(steps):
        phi = 2 * np.pi * k / steps
        phases = phases_base.copy()
        phases[modulated] = np.angle(pattern) + phi
        try:
            intensity = probe.intensity(phases)
        except Exception as exc:  # noqa: BLE001 - any probe error is a ProbeFailure
            raise ProbeFailure(f"probe raised {exc!r}") from exc
        intensity = np.asarray(intensity, dtype=float)
        if intensity.ndim != 1 or not np.all(np.isfinite(intensity)):
            raise ProbeFailure("probe returned a non-finite or non-vector intensity")
        term = intensity * np.exp(-1j * phi)
        acc = term if acc is None else acc + term
    return acc / steps


def _measure_pass(probe, modulated, basis, steps):
    n_seg = probe.n_segments
    nm = len(modulated)
    base = np.zeros(n_seg)
    if basis == "hadamard":
        if nm & (nm - 1):
            raise BasisSizeMismatch(f"Hadamard basis needs a power-of-two segment count, got {nm}")
        h = scipy.linalg.hadamard(nm).astype(float)
        y = np.stack([_demodulate(probe, base, modulated, h[b], steps) for b in range(nm)], axis=1)
        return y @ h / nm, nm
    if basis == "pixel":
        ones = np.ones(nm)
        y0 = _demodulate(probe, base, modulated, ones, steps)
        cols = []
        for b in range(nm):
            v = ones.copy()
            v[b] = -1.0
            cols.append(0.5 * (y0 - _demodulate(probe, base, modulated, v, steps)))
        return np.stack(cols, axis=1), nm + 1
    raise ValueError(f"unknown basis {basis!r}")


def measure_tm(
    probe,
    phase_steps: int = 4,
    basis: str = "hadamard",
    complementary: bool = True,
    block: int = 1,
    seed: int | None = None,
) -> TransmissionMatrix:
    """Phase-stepping TM acquisition with an alternating-block reference.

    With ``complementary`` the roles of the two halves are swapped in a second
    pass and the two halves are stitched into one phase gauge: the sum of the
    first-pass row over its modulated segments is ``conj(s_A) s_B`` (up to
    unmodulated light), whose phase rotates the second-pass row onto the first.
    """
    if phase_steps < 3:
        raise ValueError("phase_steps must be >= 3")
    n_seg = probe.n_segments
    groups = _alternating_groups(n_seg, block)
    passes = [np.flatnonzero(groups == 1)]
    if complementary:
        passes.append(np.flatnonzero(groups == 0))
    if any(len(p) == 0 for p in passes):
        raise BasisSizeMismatch("need at least two reference blocks")

    entries = None
    n_patterns = 0
    first_sum = None
    for i, modulated in enumerate(passes):
        t_pass, used = _measure_pass(probe, modulated, basis, phase_steps)
        n_patterns += used
        if entries is None:
            entries = np.zeros((t_pass.shape[0], n_seg), dtype=complex)
        if i == 0:
            first_sum = t_pass.sum(axis=1)
        else:
            mag = np.abs(first_sum)
            rot = np.where(mag > 0, first_sum / np.where(mag > 0, mag, 1.0), 1.0)
            t_pass = t_pass * rot[:, None]
        entries[:, modulated] = t_pass
    return TransmissionMatrix(
        entries=entries,
        basis=basis,
        modulated=tuple(tuple(int(j) for j in p) for p in passes),
        phase_steps=phase_steps,
        seed=seed,
        template=getattr(probe, "template", None),
        reference=f"alternating blocks of {block}" + (", complementary" if complementary else ""),
        n_acquisitions=n_patterns * phase_steps,
    )


def _mask_from(tm: TransmissionMatrix, phases) -> SlmMask:
    if tm.template is None:
        raise ValueError("transmission matrix has no SLM segmentation attached")
    return tm.template.with_phases(phases)


def focus_mask(tm: TransmissionMatrix, target: int) -> SlmMask:
    """Phase conjugation of the target row."""
    return _mask_from(tm, wrap_phase(-np.angle(tm.row(target))))


def multi_target_mask(tm: TransmissionMatrix, targets) -> SlmMask:
    """Phase of the superposed conjugate rows, each row scaled to unit norm."""
    targets = list(targets)
    if not targets:
        raise EmptyTargets("no target pixels given")
    if len(set(int(t) for t in targets)) != len(targets):
        raise ValueError("targets must be distinct")
    # measured rows carry the reference amplitude |s_m|; equalize the targets
    acc = 0
    for t in targets:
        row = tm.row(t)
        norm = np.linalg.norm(row)
        acc = acc + np.conj(row) / (norm if norm > 0 else 1.0)
    return _mask_from(tm, np.angle(acc))


def _segment_indices(region, n_segments):
    if isinstance(region, slice):
        idx = list(range(n_segments))[region]
    else:
        idx = [int(j) for j in region]
    if any(j < 0 or j >= n_segments for j in idx):
        raise RegionOutOfRange(f"region {region!r} outside [0, {n_segments})")
    return np.asarray(idx, dtype=np.int64)


def quadrant_pi_shift(mask: SlmMask, region) -> SlmMask:
    """Add ``pi`` (mod 2 pi) to the segments in ``region``."""
    idx = _segment_indices(region, mask.n_segments)
    phases = mask.segment_phases.copy()
    phases[idx] += np.pi
    return mask.with_phases(phases)


@dataclass(frozen=True, eq=False)
class OptimizationTrace:
    segments: np.ndarray
    phases: np.ndarray
    intensities: np.ndarray
    initial_intensity: float
    final_phases: np.ndarray
    mask: SlmMask | None = field(default=None)


def sequential_optimize(
    probe,
    target: int,
    n_trial_phases: int = 8,
    iterations: int = 250,
    rng_seed=None,
) -> OptimizationTrace:
    """Greedy segment-by-segment optimization of the intensity at ``target``.

    One iteration updates one segment (visited cyclically in index order):
    ``n_trial_phases`` equally spaced phases are tried and the best is kept
    only if it beats the incumbent.  With ``rng_seed`` the trial comb gets a
    random offset per iteration; without it the comb starts at 0.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if n_trial_phases < 3:
        raise ValueError("n_trial_phases must be >= 3")
    rng = np.random.default_rng(rng_seed) if rng_seed is not None else None
    n_seg = probe.n_segments
    comb = 2 * np.pi * np.arange(n_trial_phases) / n_trial_phases
    theta = np.zeros(n_seg)
    segs = np.empty(iterations, dtype=np.int64)
    chosen = np.empty(iterations)
    values = np.empty(iterations)

    fast = hasattr(probe, "target_fields")
    if fast:
        d, r = probe.target_fields(target)
        e = np.exp(1j * theta)
        total = r + e @ d
        current = float(np.sum(np.abs(total) ** 2))
    else:
        intensity = probe.intensity(theta)
        _check_target(target, len(intensity))
        current = float(intensity[target])
    initial = current

    for it in range(iterations):
        j = it % n_seg
        trial = comb + (rng.uniform(0, 2 * np.pi / n_trial_phases) if rng is not None else 0.0)
        if fast:
            base = total - d[j] * e[j]
            cand = base[None, :] + np.exp(1j * trial)[:, None] * d[j][None, :]
            vals = np.sum(np.abs(cand) ** 2, axis=1)
        else:
            vals = np.empty(n_trial_phases)
            for q, ph in enumerate(trial):
                test = theta.copy()
                test[j] = ph
                vals[q] = probe.intensity(test)[target]
        best = int(np.argmax(vals))
        if vals[best] > current:
            theta[j] = trial[best]
            current = float(vals[best])
            if fast:
                e[j] = np.exp(1j * trial[best])
                total = cand[best]
        segs[it] = j
        chosen[it] = theta[j]
        values[it] = current

    template = getattr(probe, "template", None)
    mask = template.with_phases(theta) if template is not None else None
    return OptimizationTrace(segs, chosen, values, initial, wrap_phase(theta), mask)


def enhancement_factor(
    system_with_mask: SystemOperator,
    system_flat: SystemOperator,
    coherent_probe,
    target: int,
    region=None,
) -> float:
    """Target intensity with the mask over the mean flat-mask intensity in ``region``.

    ``coherent_probe`` is the benchmarking beam (a K = 1 state or its
    decomposition); ``region`` defaults to the whole camera.
    """
    after = reduced_intensity(coherent_probe, system_with_mask).values
    _check_target(target, len(after))
    before = reduced_intensity(coherent_probe, system_flat).values
    sel = before if region is None else before[region]
    mean = float(np.mean(sel)) if sel.size else 0.0
    if not mean > 0:
        raise ZeroMean("mean pre-optimization intensity is zero")
    return float(after[target] / mean)


def exact_target_row(system: SystemOperator, field_in: np.ndarray, target: int) -> np.ndarray:
    """Exact per-segment field at ``target`` for input ``field_in`` and flat SLM.

    Used as ground truth: ``t[j] = sum_{x in segment j} T_flat[target, x] field_in[x]``.
    """
    n = system.grid.n_points
    _check_target(target, n)
    c = (n - 1) / 2.0
    row = np.exp(-2j * np.pi * (target - c) * (np.arange(n) - c) / n) / math.sqrt(n)
    contrib = row * system.screen.transmission * field_in
    return system.mask.segment_sum(contrib)


def exact_tm(system: SystemOperator, field_in: np.ndarray) -> np.ndarray:
    """Exact segment TM ``t[m, j]`` of a coherent input through the flat-SLM channel."""
    n = system.grid.n_points
    contrib = system.screen.transmission * field_in
    mask = system.mask
    cols = np.zeros((n, mask.n_segments), dtype=complex)
    for j in range(mask.n_segments):
        sel = mask.segment_index == j
        vec = np.zeros(n, dtype=complex)
        vec[sel] = contrib[sel]
        cols[:, j] = fourier_propagate(vec)
    return cols


def reference_field(system: SystemOperator, field_in: np.ndarray, reference_segments) -> np.ndarray:
    """Camera field of the static part (reference segments plus unmodulated pixels)."""
    mask = system.mask
    ref = np.isin(mask.segment_index, np.asarray(reference_segments)) | ~mask.aperture
    vec = np.where(ref, system.screen.transmission * field_in, 0.0)
    return fourier_propagate(vec)
