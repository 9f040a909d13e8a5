"""Thin-element optical channel: SLM mask, phase scatterer and a Fourier lens.

The experimental relay chain is collapsed to a single plane holding both the
SLM and the scatterer (they are image-conjugate, so their phase factors
commute), followed by one unitary DFT to the camera:

    T = F . diag(exp(i phi_screen)) . diag(exp(i phi_slm))

The DFT uses the same half-pixel-offset coordinates as :class:`Grid1D`, which
makes it symmetric, unitary and an exact parity operator when applied twice.
Camera pixels share the grid indexing; camera pixel ``m`` sits at spatial
frequency ``(m - (n-1)/2) / extent``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from tpshape.errors import CorrelationTooFine, GridMismatch
from tpshape.spdc_state import Grid1D


def wrap_phase(phase):
    """Wrap to (-pi, pi]."""
    return np.angle(np.exp(1j * np.asarray(phase, dtype=float)))


def _dft_factors(n: int):
    c = (n - 1) / 2.0
    k = np.arange(n)
    pre = np.exp(2j * np.pi * c * k / n)
    post = np.exp(2j * np.pi * c * k / n) * np.exp(-2j * np.pi * c * c / n) / math.sqrt(n)
    return pre, post


def fourier_propagate(field, grid: Grid1D | None = None, axis: int = 0) -> np.ndarray:
    """Centered unitary DFT along ``axis``.

    ``F[m, k] = exp(-2 pi i (m - c)(k - c) / n) / sqrt(n)`` with ``c = (n-1)/2``.
    """
    field = np.asarray(field)
    n = field.shape[axis]
    if grid is not None and grid.n_points != n:
        raise GridMismatch(f"field length {n} != grid size {grid.n_points}")
    pre, post = _dft_factors(n)
    shape = [1] * field.ndim
    shape[axis] = n
    out = np.fft.fft(field * pre.reshape(shape), axis=axis)
    return out * post.reshape(shape)


def dft_matrix(n: int) -> np.ndarray:
    c = (n - 1) / 2.0
    m = np.arange(n) - c
    return np.exp(-2j * np.pi * np.outer(m, m) / n) / math.sqrt(n)


def _phase_field_length(correlation_length: float, phase_std: float) -> float:
    """Correlation length of the Gaussian phase field giving the requested
    1/e width of the autocorrelation of ``exp(i phi)``.

    For Gaussian phase with correlation ``rho(d)`` the (mean-subtracted,
    normalized) autocorrelation of the transmission is
    ``(exp(-s^2 (1 - rho)) - exp(-s^2)) / (1 - exp(-s^2))``.
    """
    s2 = phase_std**2
    floor = math.exp(-s2)
    rho_at_l = 1.0 + math.log(math.exp(-1.0) * (1.0 - floor) + floor) / s2
    return correlation_length / math.sqrt(-math.log(rho_at_l))


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    grid: Grid1D
    phases: np.ndarray
    correlation_length: float
    seed: int | None
    phase_std: float = 2 * math.pi

    @classmethod
    def zero(cls, grid: Grid1D) -> "PhaseScreen":
        return cls(grid, np.zeros(grid.n_points), math.inf, None, 0.0)

    @property
    def transmission(self) -> np.ndarray:
        return np.exp(1j * self.phases)


def random_phase_screen(
    grid: Grid1D, correlation_length: float, seed: int, phase_std: float = 2 * math.pi
) -> PhaseScreen:
    """Gaussian-filtered white noise, wrapped into (-pi, pi].

    ``correlation_length`` is the 1/e half-width of the autocorrelation of the
    transmission ``exp(i phi)``; ``phase_std`` the rms of the unwrapped phase.
    The filter is applied on the periodic grid and its power spectrum is
    normalized to unit sum, so the DC mode carries the variance when the
    correlation length exceeds the grid.
    """
    if correlation_length < grid.dx:
        raise CorrelationTooFine(
            f"correlation length {correlation_length:.3e} m below pitch {grid.dx:.3e} m"
        )
    if not phase_std > 0:
        raise ValueError("phase_std must be positive")
    n = grid.n_points
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n)
    ell = _phase_field_length(correlation_length, phase_std)
    k = 2 * np.pi * np.fft.fftfreq(n, grid.dx)
    spectrum = np.exp(-(k**2) * ell**2 / 4.0)
    spectrum /= spectrum.sum()
    phi = np.fft.ifft(np.fft.fft(noise) * np.sqrt(spectrum)).real * math.sqrt(n) * phase_std
    return PhaseScreen(grid, wrap_phase(phi), correlation_length, seed, phase_std)


@dataclass(frozen=True, eq=False)
class SlmMask:
    """Phase-only SLM of ``n_segments`` contiguous macro-pixels.

    ``segment_index[k]`` is the segment driving grid pixel ``k`` or ``-1``
    for pixels outside the active aperture (left unmodulated).
    """

    grid: Grid1D
    segment_index: np.ndarray
    segment_phases: np.ndarray = field(default=None)

    def __post_init__(self):
        idx = np.asarray(self.segment_index)
        if idx.shape != (self.grid.n_points,):
            raise GridMismatch("segment_index must have one entry per grid pixel")
        if self.segment_phases is None:
            object.__setattr__(self, "segment_phases", np.zeros(self.n_segments))
        phases = np.asarray(self.segment_phases, dtype=float)
        if phases.shape != (self.n_segments,):
            raise ValueError(f"expected {self.n_segments} segment phases, got {phases.shape}")
        object.__setattr__(self, "segment_phases", wrap_phase(phases))

    @classmethod
    def flat(cls, grid: Grid1D, n_segments: int, aperture: float | None = None) -> "SlmMask":
        """Centered aperture of width ``aperture`` (default: whole grid) split
        into ``n_segments`` contiguous blocks of (near-)equal pixel count."""
        n = grid.n_points
        if aperture is None or aperture >= grid.extent:
            inside = np.ones(n, dtype=bool)
        else:
            inside = np.abs(grid.x) < aperture / 2
        n_inside = int(inside.sum())
        if not 1 <= n_segments <= n_inside:
            raise ValueError(f"cannot split {n_inside} aperture pixels into {n_segments} segments")
        idx = np.full(n, -1, dtype=np.int64)
        idx[inside] = np.arange(n_inside) * n_segments // n_inside
        return cls(grid, idx)

    @property
    def n_segments(self) -> int:
        return int(self.segment_index.max()) + 1

    @property
    def aperture(self) -> np.ndarray:
        return self.segment_index >= 0

    def with_phases(self, phases) -> "SlmMask":
        return replace(self, segment_phases=np.asarray(phases, dtype=float))

    def expanded(self) -> np.ndarray:
        """Per-pixel phase (0 outside the aperture)."""
        out = np.zeros(self.grid.n_points)
        ap = self.aperture
        out[ap] = self.segment_phases[self.segment_index[ap]]
        return out

    def pixel_factor(self) -> np.ndarray:
        return np.exp(1j * self.expanded())

    def segment_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum ``values`` (pixels along axis 0) within each segment."""
        values = np.asarray(values)
        ap = self.aperture
        out = np.zeros((self.n_segments,) + values.shape[1:], dtype=np.result_type(values, complex))
        np.add.at(out, self.segment_index[ap], values[ap])
        return out


@dataclass(frozen=True, eq=False)
class SystemOperator:
    """Immutable channel from the SLM/scatterer plane to the camera."""

    grid: Grid1D
    screen: PhaseScreen
    mask: SlmMask

    def plane_factor(self) -> np.ndarray:
        """Combined diagonal of the screen and SLM factors."""
        return self.screen.transmission * self.mask.pixel_factor()

    def apply(self, field: np.ndarray) -> np.ndarray:
        """``T @ field`` for a vector or for each column of a matrix."""
        field = np.asarray(field)
        if field.shape[0] != self.grid.n_points:
            raise GridMismatch(f"field length {field.shape[0]} != grid size {self.grid.n_points}")
        d = self.plane_factor()
        if field.ndim == 2:
            d = d[:, None]
        return fourier_propagate(field * d, axis=0)

    @property
    def matrix(self) -> np.ndarray:
        return dft_matrix(self.grid.n_points) * self.plane_factor()[None, :]


def compose_system(screen: PhaseScreen, mask: SlmMask, grid: Grid1D | None = None) -> SystemOperator:
    grid = grid or screen.grid
    if screen.grid != grid or mask.grid != grid:
        raise GridMismatch("screen, mask and grid must share the same Grid1D")
    return SystemOperator(grid, screen, mask)


def apply_mask(system: SystemOperator, mask: SlmMask) -> SystemOperator:
    """Copy of ``system`` with its SLM factor replaced."""
    if mask.grid != system.grid:
        raise GridMismatch("mask grid differs from system grid")
    return replace(system, mask=mask)
