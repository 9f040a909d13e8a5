"""Two-photon wavefront shaping through thin scatterers.

Double-Gaussian SPDC states, a thin-phase-screen optical channel, phase-stepping
transmission-matrix measurement and second-order correlation diagnostics.
"""

from tpshape.errors import TpshapeError
from tpshape.spdc_state import (
    GaussianStateParams,
    Grid1D,
    SpdcConfig,
    TwoPhotonState,
    build_state,
    schmidt_decompose,
)
from tpshape.optical_system import (
    PhaseScreen,
    SlmMask,
    SystemOperator,
    compose_system,
    random_phase_screen,
)

__all__ = [
    "TpshapeError",
    "GaussianStateParams",
    "Grid1D",
    "SpdcConfig",
    "TwoPhotonState",
    "build_state",
    "schmidt_decompose",
    "PhaseScreen",
    "SlmMask",
    "SystemOperator",
    "compose_system",
    "random_phase_screen",
]

__version__ = "0.1.0"
