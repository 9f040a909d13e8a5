"""INI-style experiment configuration.

Each command starts from its own defaults (:func:`defaults`) and a config
file only overrides keys.  Unknown sections or keys are rejected.

Example::

    [grid]
    n_points = 1500
    extent = 10e-3

    [state]
    diff_width = 133e-6
    k_values = 1, 2, 4, 8, 16, 32
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from tpshape.errors import ConfigError


@dataclass(frozen=True)
class GridSection:
    n_points: int = 1500
    extent: float = 10e-3
    samples_per_width: float = 3.0


@dataclass(frozen=True)
class StateSection:
    """Near-field state plus the Fourier relay onto the SLM/scatterer plane.

    The state is given either as ``diff_width`` and a list of Schmidt numbers,
    as explicit ``sum_width``/``diff_width``, or from the crystal and pump
    (``crystal_length``, ``pump_wavelength``, ``pump_waist``).
    ``relay_focal_length = 0`` puts the near-field state directly on the SLM.
    """

    diff_width: float = 133e-6
    sum_width: float = 0.0
    crystal_length: float = 0.0
    pump_wavelength: float = 0.0
    pump_waist: float = 0.0
    k_values: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)
    k_kind: str = "1d"
    width_reading: str = "sigma"
    wavelength: float = 810e-9
    relay_focal_length: float = 2.0
    probe_k: float = 1.0


@dataclass(frozen=True)
class ScattererSection:
    correlation_length: float = 30e-6
    phase_std: float = 2 * math.pi
    seed: int = -1


@dataclass(frozen=True)
class SlmSection:
    n_segments: int = 50
    aperture: float = 6e-3
    basis: str = "hadamard"
    phase_steps: int = 4
    block: int = 1


@dataclass(frozen=True)
class OptimizationSection:
    iterations: int = 250
    trial_phases: int = 8
    target: int = -1
    envelope_seeds: int = 20


@dataclass(frozen=True)
class DetectorSection:
    mu_pair: float = 0.2
    p_dark: float = 1e-3
    threshold: bool = True
    n_frames: int = 100000
    n_points: int = 64
    k_1d: float = 4.0
    background: str = "next"


@dataclass(frozen=True)
class CorrelationSection:
    peak_halfwidth: int = 4
    background_outer: int = 32


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    repeats: int = 10
    threads: int = 1
    out: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    state: StateSection = field(default_factory=StateSection)
    scatterer: ScattererSection = field(default_factory=ScattererSection)
    slm: SlmSection = field(default_factory=SlmSection)
    optimization: OptimizationSection = field(default_factory=OptimizationSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    correlation: CorrelationSection = field(default_factory=CorrelationSection)
    run: RunSection = field(default_factory=RunSection)

    @property
    def target(self) -> int:
        t = self.optimization.target
        return self.grid.n_points // 2 if t < 0 else t

    def k_values_1d(self) -> tuple:
        ks = tuple(float(k) for k in self.state.k_values)
        if self.state.k_kind == "2d":
            ks = tuple(math.sqrt(k) for k in ks)
        return ks

    def with_overrides(self, section: str, **values) -> "ExperimentConfig":
        return replace(self, **{section: replace(getattr(self, section), **values)})


def defaults(command: str) -> ExperimentConfig:
    """Default configuration of a CLI command."""
    base = ExperimentConfig()
    if command == "demo-correction" or command == "tm":
        return ExperimentConfig(
            grid=GridSection(256, 2.56e-3, samples_per_width=1.0),
            state=StateSection(k_values=(16.0,), relay_focal_length=0.66, probe_k=1.1),
            scatterer=ScattererSection(correlation_length=10e-6),
            slm=SlmSection(n_segments=256, aperture=0.0, basis="hadamard"),
            run=RunSection(seed=7, repeats=1),
        )
    return base


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(template, text: str):
    if isinstance(template, bool):
        return _parse_bool(text)
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, tuple):
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    return text.strip()


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    config = base
    for name in parser.sections():
        if not hasattr(config, name):
            raise ConfigError(f"unknown section [{name}]")
        section = getattr(config, name)
        known = {f.name for f in fields(section)}
        updates = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                updates[key] = _convert(getattr(section, key), raw)
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from exc
        config = replace(config, **{name: replace(section, **updates)})
    validate(config)
    return config


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base)


def validate(config: ExperimentConfig) -> None:
    def need(cond, message):
        if not cond:
            raise ConfigError(message)

    g, s, sc, slm, opt, det, run = (config.grid, config.state, config.scatterer, config.slm,
                                   config.optimization, config.detector, config.run)
    need(g.n_points >= 8, "grid.n_points must be >= 8")
    need(g.extent > 0, "grid.extent must be positive")
    need(g.samples_per_width > 0, "grid.samples_per_width must be positive")
    need(s.k_kind in ("1d", "2d"), "state.k_kind must be 1d or 2d")
    need(s.width_reading in ("sigma", "fwhm"), "state.width_reading must be sigma or fwhm")
    need(len(s.k_values) > 0, "state.k_values must not be empty")
    need(all(k >= 1 for k in config.k_values_1d()), "Schmidt numbers must be >= 1")
    need(s.probe_k >= 1, "state.probe_k must be >= 1")
    need(s.diff_width > 0 and s.sum_width >= 0, "state widths must be positive")
    need(s.wavelength > 0 and s.relay_focal_length >= 0, "relay parameters must be positive")
    optics = (s.crystal_length, s.pump_wavelength, s.pump_waist)
    need(all(v == 0 for v in optics) or all(v > 0 for v in optics),
         "crystal_length, pump_wavelength and pump_waist must be given together")
    need(sc.correlation_length > 0 and sc.phase_std > 0, "scatterer parameters must be positive")
    need(1 <= slm.n_segments <= g.n_points, "slm.n_segments must lie in [1, n_points]")
    need(slm.aperture >= 0, "slm.aperture must be >= 0")
    need(slm.basis in ("pixel", "hadamard"), "slm.basis must be pixel or hadamard")
    need(config.detector.background in ("next", "mean"), "detector.background must be next or mean")
    need(slm.phase_steps >= 3, "slm.phase_steps must be >= 3")
    need(slm.block >= 1, "slm.block must be >= 1")
    need(opt.iterations >= 1, "optimization.iterations must be >= 1")
    need(opt.trial_phases >= 3, "optimization.trial_phases must be >= 3")
    need(opt.target < g.n_points, "optimization.target outside the camera")
    need(opt.envelope_seeds >= 1, "optimization.envelope_seeds must be >= 1")
    need(det.mu_pair >= 0 and 0 <= det.p_dark < 1, "detector parameters out of range")
    need(det.n_frames >= 2 and det.n_points >= 4 and det.k_1d >= 1, "detector run parameters out of range")
    need(config.correlation.peak_halfwidth >= 0, "correlation.peak_halfwidth must be >= 0")
    need(run.repeats >= 1 and run.threads >= 1, "run.repeats and run.threads must be >= 1")
    need(run.seed >= 0, "run.seed must be >= 0")
