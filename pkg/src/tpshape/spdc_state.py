"""Double-Gaussian two-photon states: construction, coherence and Schmidt number.

The joint amplitude is

    psi(x1, x2) ∝ exp(-(x1 + x2)^2 / (4 A^2)) * exp(-(x1 - x2)^2 / (4 B^2))

with ``A = 1/sigma_p`` (sum width, set by the pump waist) and ``B = sigma_r``
(difference width, set by crystal length and pump wavelength).  Both are 1/e
amplitude half-widths.  Quantities reported as a "width" of a coherence or
intensity profile use the FWHM and say so in their name.

Grid convention, used everywhere in the package: ``x_k = (k - n/2 + 1/2) dx``,
so the grid is symmetric about 0 and ``x -> -x`` maps index ``k`` to ``n-1-k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tpshape.errors import (
    ConfigError,
    DecompositionFailure,
    InfiniteWidth,
    TruncatedState,
    UndersampledGrid,
    ZeroIntensity,
)

# captured/analytic norm below this means the grid clips the state
NORM_CAPTURE_MIN = 0.999
SAMPLES_PER_WIDTH = 3.0


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class SpdcConfig:
    """Physical SPDC parameters (SI units).

    ``pump_wavelength`` enters the formulas as given; it is meant to be the
    wavelength inside the crystal.  Use :func:`wavelength_in_medium` to convert
    a vacuum value explicitly.
    """

    crystal_length: float
    pump_wavelength: float
    pump_waist: float

    def __post_init__(self):
        _positive("crystal_length", self.crystal_length)
        _positive("pump_wavelength", self.pump_wavelength)
        _positive("pump_waist", self.pump_waist)

    @property
    def _pump_term(self):
        # 24 pi w^2
        return 24.0 * math.pi * self.pump_waist**2

    @property
    def _crystal_term(self):
        # L lambda_p
        return self.crystal_length * self.pump_wavelength


def wavelength_in_medium(vacuum_wavelength: float, refractive_index: float) -> float:
    _positive("vacuum_wavelength", vacuum_wavelength)
    _positive("refractive_index", refractive_index)
    return vacuum_wavelength / refractive_index


def sigma_r(config: SpdcConfig) -> float:
    """Position correlation width sqrt(L lambda_p / (6 pi)) in meters."""
    return math.sqrt(config.crystal_length * config.pump_wavelength / (6.0 * math.pi))


def sigma_p(config: SpdcConfig) -> float:
    """Momentum correlation width 1/(2 w) in 1/m."""
    return 1.0 / (2.0 * config.pump_waist)


@dataclass(frozen=True)
class GaussianStateParams:
    """Sum width ``A`` and difference width ``B`` of the joint amplitude (meters)."""

    sum_width: float
    diff_width: float

    def __post_init__(self):
        _positive("sum_width", self.sum_width)
        _positive("diff_width", self.diff_width)

    @classmethod
    def from_config(cls, config: SpdcConfig) -> "GaussianStateParams":
        return cls(1.0 / sigma_p(config), sigma_r(config))

    @classmethod
    def from_schmidt_1d(
        cls, diff_width: float, k_1d: float, branch: str = "wide"
    ) -> "GaussianStateParams":
        """Solve ``k_1d = (A/B + B/A)/2`` for ``A`` at fixed ``B``.

        ``branch="wide"`` takes ``A >= B`` (photons correlated in this plane),
        ``"narrow"`` takes ``A <= B`` (anticorrelated).
        """
        if not k_1d >= 1.0:
            raise ValueError(f"1D Schmidt number must be >= 1, got {k_1d}")
        ratio = k_1d + math.sqrt(k_1d * k_1d - 1.0)
        if branch == "wide":
            return cls(diff_width * ratio, diff_width)
        if branch == "narrow":
            return cls(diff_width / ratio, diff_width)
        raise ValueError(f"unknown branch {branch!r}")

    @property
    def schmidt_number_1d(self) -> float:
        a, b = self.sum_width, self.diff_width
        return 0.5 * (a / b + b / a)

    @property
    def schmidt_number_2d(self) -> float:
        return self.schmidt_number_1d**2

    def fourier_relay(self, focal_length: float, wavelength: float) -> "GaussianStateParams":
        """Widths in the back focal plane of a lens of focal length ``focal_length``.

        The Fourier transform of a double Gaussian is again a double Gaussian
        with the roles of the two widths exchanged:
        ``A' = f lambda / (2 pi A)`` is now the sum width, ``B' = f lambda / (2 pi B)``
        the difference width.  The Schmidt number is unchanged.
        """
        _positive("focal_length", focal_length)
        _positive("wavelength", wavelength)
        scale = focal_length * wavelength / (2.0 * math.pi)
        return GaussianStateParams(scale / self.sum_width, scale / self.diff_width)


@dataclass(frozen=True)
class Grid1D:
    n_points: int
    extent: float

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points!r}")
        _positive("extent", self.extent)

    @property
    def dx(self) -> float:
        return self.extent / self.n_points

    @property
    def x(self) -> np.ndarray:
        n = self.n_points
        return (np.arange(n) - n / 2 + 0.5) * self.dx

    def index_of(self, position: float) -> int:
        """Nearest grid index to ``position`` (clipped to the grid)."""
        k = int(round(position / self.dx + self.n_points / 2 - 0.5))
        return min(max(k, 0), self.n_points - 1)


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """Discretized joint amplitude; ``amplitude[i, j] = psi(x_i, x_j)``.

    Normalized so that ``sum |psi|^2 dx^2 == 1``.
    """

    grid: Grid1D
    amplitude: np.ndarray
    params: GaussianStateParams | None = None
    norm_constant: float = field(default=1.0)

    def __post_init__(self):
        n = self.grid.n_points
        if self.amplitude.shape != (n, n):
            raise ValueError(f"amplitude must be {n}x{n}, got {self.amplitude.shape}")

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.grid.dx**2)


def build_state(
    params: GaussianStateParams,
    grid: Grid1D,
    allow_truncation: bool = False,
    samples_per_width: float = SAMPLES_PER_WIDTH,
) -> TwoPhotonState:
    """Sample and normalize the double-Gaussian amplitude on ``grid``.

    Raises :class:`UndersampledGrid` when the pitch exceeds the narrower width
    divided by ``samples_per_width`` and :class:`TruncatedState` when the grid
    captures less than 99.9 % of the analytic norm (unless
    ``allow_truncation``, which models a hard aperture).  Coarse demo grids
    may lower ``samples_per_width`` to 1; the norm check still applies.
    """
    if not samples_per_width > 0:
        raise ConfigError("samples_per_width must be positive")
    a, b = params.sum_width, params.diff_width
    dx = grid.dx
    if dx * samples_per_width > min(a, b) * (1 + 1e-12):
        raise UndersampledGrid(
            f"pitch {dx:.3e} m exceeds 1/{samples_per_width:g} of the narrower state width {min(a, b):.3e} m"
        )
    x = grid.x
    u = x[:, None] + x[None, :]
    v = x[:, None] - x[None, :]
    psi = np.exp(-(u**2) / (4 * a * a) - v**2 / (4 * b * b))
    raw_norm = float(np.sum(psi**2) * dx * dx)
    # analytic: int int |psi|^2 dx1 dx2 = pi A B
    captured = raw_norm / (math.pi * a * b)
    if captured < NORM_CAPTURE_MIN and not allow_truncation:
        raise TruncatedState(f"grid captures only {captured:.5f} of the state norm")
    scale = 1.0 / math.sqrt(raw_norm)
    psi *= scale
    return TwoPhotonState(grid, psi.astype(complex), params, scale)


def g1_coefficient(config: SpdcConfig) -> float:
    """Exponent coefficient ``c`` of ``g1(r, -r) = exp(-c r^2)``."""
    p, q = config._pump_term, config._crystal_term
    w = config.pump_waist
    return (p - q) ** 2 / (8.0 * w * w * (p + q) * q)


def g1_analytic(config: SpdcConfig, r) -> float | np.ndarray:
    """First-order coherence between positions ``r`` and ``-r``."""
    return np.exp(-g1_coefficient(config) * np.square(r))


def g1_coefficient_params(params: GaussianStateParams) -> float:
    """Same coefficient expressed with the amplitude widths."""
    a2, b2 = params.sum_width**2, params.diff_width**2
    return (a2 - b2) ** 2 / (2.0 * a2 * b2 * (a2 + b2))


def g1_fwhm(config: SpdcConfig) -> float:
    c = g1_coefficient(config)
    p, q = config._pump_term, config._crystal_term
    if abs(p - q) <= 1e-9 * (p + q):
        raise InfiniteWidth("balanced configuration: coherence length is unbounded")
    return 2.0 * math.sqrt(math.log(2.0) / c)


def schmidt_number_analytic(config: SpdcConfig) -> float:
    """Two-dimensional Schmidt number of the double-Gaussian state."""
    p, q = config._pump_term, config._crystal_term
    return 0.25 * ((p + q) / (math.sqrt(p) * math.sqrt(q))) ** 2


def schmidt_number_1d(config: SpdcConfig) -> float:
    """One-dimensional Schmidt number, ``sqrt`` of the 2D value."""
    return math.sqrt(schmidt_number_analytic(config))


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """Schmidt modes of a discretized state.

    ``modes[:, n]`` and ``partners[:, n]`` are orthonormal on the grid
    (``sum |u|^2 dx = 1``) and ``psi = sum_n sqrt(coefficients[n]) u_n (x) v_n``.
    """

    grid: Grid1D
    modes: np.ndarray
    partners: np.ndarray
    coefficients: np.ndarray

    def __iter__(self):
        # allows ``modes, coeffs = schmidt_decompose(state)``
        return iter((self.modes, self.coefficients))

    @property
    def schmidt_number(self) -> float:
        return float(1.0 / np.sum(self.coefficients**2))

    def truncated(self, tolerance: float = 1e-6) -> "SchmidtDecomposition":
        """Keep the leading modes holding at least ``1 - tolerance`` of the weight."""
        cum = np.cumsum(self.coefficients)
        keep = int(np.searchsorted(cum, (1.0 - tolerance) * cum[-1])) + 1
        keep = min(keep, len(self.coefficients))
        return SchmidtDecomposition(
            self.grid,
            self.modes[:, :keep],
            self.partners[:, :keep],
            self.coefficients[:keep],
        )

    def weighted_modes(self) -> np.ndarray:
        """Columns ``sqrt(lambda_n) u_n``; the reduced intensity is their summed ``|.|^2``."""
        return self.modes * np.sqrt(self.coefficients)[None, :]


def _real_symmetric(psi: np.ndarray) -> np.ndarray | None:
    real = np.real(psi)
    if np.iscomplexobj(psi) and np.any(np.imag(psi)):
        return None
    return real if np.array_equal(real, real.T) else None


def schmidt_decompose(state: TwoPhotonState) -> SchmidtDecomposition:
    """Schmidt modes from the SVD of ``psi dx``, sorted by weight.

    Real symmetric amplitudes (every double-Gaussian state) use a symmetric
    eigendecomposition instead, which is several times faster.
    """
    dx = state.grid.dx
    sym = _real_symmetric(state.amplitude)
    try:
        if sym is not None:
            w, v = np.linalg.eigh(sym * dx)
            order = np.argsort(-np.abs(w), kind="stable")
            w, v = w[order], v[:, order]
            u, s, vh = v, np.abs(w), (v * np.where(w < 0, -1.0, 1.0)[None, :]).T
        else:
            u, s, vh = np.linalg.svd(state.amplitude * dx)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(str(exc)) from exc
    coeffs = s**2
    total = coeffs.sum()
    if not np.isfinite(total) or total <= 0:
        raise DecompositionFailure("state has zero or non-finite norm")
    coeffs = coeffs / total
    root = math.sqrt(dx)
    return SchmidtDecomposition(state.grid, u / root, vh.T / root, coeffs)


def reduced_density_matrix(state: TwoPhotonState) -> np.ndarray:
    """``rho(x, x') = sum_a psi(x, a) conj(psi(x', a)) dx``."""
    psi = state.amplitude
    return psi @ psi.conj().T * state.grid.dx


def g1_numeric(state: TwoPhotonState, r, rho: np.ndarray | None = None):
    """Normalized ``|rho(r, -r)|`` from the reduced density matrix.

    ``r`` may be a scalar or array; nearest grid points are used.  Pass a
    precomputed ``rho`` to evaluate many radii cheaply.
    """
    if rho is None:
        rho = reduced_density_matrix(state)
    grid = state.grid
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    diag = np.real(np.diag(rho))
    peak = diag.max()
    out = np.empty(r_arr.shape)
    for i, ri in enumerate(r_arr):
        k = grid.index_of(ri)
        j = grid.n_points - 1 - k
        if diag[k] < 1e-15 * peak or diag[j] < 1e-15 * peak:
            raise ZeroIntensity(f"no intensity at r = {ri:.3e} m")
        out[i] = abs(rho[k, j]) / math.sqrt(diag[k] * diag[j])
    return out if np.ndim(r) else float(out[0])
