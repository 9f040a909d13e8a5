"""Two-photon propagation, reduced intensities and speckle contrast."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tpshape.errors import EmptyRegion, GridMismatch, ZeroMean
from tpshape.optical_system import SystemOperator, fourier_propagate
from tpshape.spdc_state import Grid1D, SchmidtDecomposition, TwoPhotonState, schmidt_decompose

MODE_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class OutputJointAmplitude:
    grid: Grid1D
    amplitude: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.grid.dx**2)


@dataclass(frozen=True, eq=False)
class IntensityProfile:
    """Single-photon detection density over camera pixels (sums to 1 with ``dx``)."""

    grid: Grid1D
    values: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)


def _check_grid(grid: Grid1D, system: SystemOperator):
    if grid != system.grid:
        raise GridMismatch("state and system grids differ")


def propagate_two_photon(state: TwoPhotonState, system: SystemOperator) -> OutputJointAmplitude:
    """``psi_out = T psi T^T``; both photons cross the same channel."""
    _check_grid(state.grid, system)
    half = system.apply(state.amplitude)
    out = system.apply(half.T).T
    return OutputJointAmplitude(state.grid, out)


def coherent_modes(state, tolerance: float = MODE_TOLERANCE) -> SchmidtDecomposition:
    """Schmidt modes of ``state`` truncated at cumulative weight ``1 - tolerance``.

    Accepts an existing decomposition and only truncates it.
    """
    dec = state if isinstance(state, SchmidtDecomposition) else schmidt_decompose(state)
    return dec.truncated(tolerance)


def reduced_intensity(state, system: SystemOperator, tolerance: float = MODE_TOLERANCE) -> IntensityProfile:
    """``I(x) = sum_n lambda_n |(T u_n)(x)|^2`` over the retained Schmidt modes.

    ``state`` may be a :class:`TwoPhotonState` or a precomputed
    :class:`SchmidtDecomposition` (decompositions are the expensive step).
    """
    modes = coherent_modes(state, tolerance)
    _check_grid(modes.grid, system)
    out = system.apply(modes.weighted_modes())
    values = np.sum(np.abs(out) ** 2, axis=1)
    return IntensityProfile(modes.grid, values)


def marginal_intensity(psi_out: OutputJointAmplitude) -> IntensityProfile:
    """Row marginal ``sum_y |psi_out(x, y)|^2 dx`` (brute-force reference)."""
    values = np.sum(np.abs(psi_out.amplitude) ** 2, axis=1) * psi_out.grid.dx
    return IntensityProfile(psi_out.grid, values)


def _region_values(values: np.ndarray, region) -> np.ndarray:
    if region is None:
        sel = values
    elif isinstance(region, slice):
        sel = values[region]
    else:
        region = np.asarray(region)
        sel = values[region]
    if sel.size == 0:
        raise EmptyRegion("speckle region selects no pixels")
    return sel


def speckle_contrast(profile: IntensityProfile | np.ndarray, region=None) -> float:
    """Standard deviation over mean of the intensity within ``region``.

    ``region`` is a slice, boolean mask or index array; ``None`` uses all
    pixels.  Normalization across a sweep is left to the caller.
    """
    values = profile.values if isinstance(profile, IntensityProfile) else np.asarray(profile)
    sel = _region_values(values, region)
    mean = sel.mean()
    if not mean > 0:
        raise ZeroMean("mean intensity in region is zero")
    return float(sel.std() / mean)


def mean_envelope(modes: SchmidtDecomposition, systems) -> np.ndarray:
    """Intensity averaged over a collection of systems (e.g. screen seeds)."""
    acc = None
    count = 0
    for system in systems:
        values = reduced_intensity(modes, system, tolerance=0.0).values
        acc = values if acc is None else acc + values
        count += 1
    if count == 0:
        raise EmptyRegion("no systems given for the envelope")
    return acc / count


def central_region(envelope: np.ndarray, level: float = 0.5) -> np.ndarray:
    """Boolean mask of pixels where ``envelope`` exceeds ``level`` of its peak."""
    envelope = np.asarray(envelope)
    return envelope > level * envelope.max()


def camera_intensity(weighted_modes: np.ndarray, plane_factor: np.ndarray) -> np.ndarray:
    """Low-level helper: ``sum |F(d * m)|^2`` over mode columns."""
    out = fourier_propagate(weighted_modes * plane_factor[:, None], axis=0)
    return np.sum(np.abs(out) ** 2, axis=1)
