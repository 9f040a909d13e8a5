"""Second-order correlation maps, projections and a photon-counting frame model."""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from tpshape.errors import (
    DegenerateBackground,
    FormatError,
    InvalidDetectorParams,
    TooFewFrames,
)
from tpshape.propagation import OutputJointAmplitude
from tpshape.spdc_state import Grid1D

FRAME_MAGIC = b"TPSHFRM1"
FRAME_VERSION = 1
FRAME_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class G2Map:
    """Joint detection density over ``(x1, x2)`` (sums to 1 with ``dx**2`` when exact)."""

    grid: Grid1D
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class G2Projection:
    """``values[k]`` belongs to pixel offset ``offsets[k]`` (``-(n-1) .. n-1``).

    For the sum coordinate the offset is ``i + j - (n - 1)``, so 0 is the
    pair centred on the optical axis.
    """

    coordinate: str
    offsets: np.ndarray
    values: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.values))


def g2_exact(psi_out: OutputJointAmplitude) -> G2Map:
    values = np.abs(psi_out.amplitude) ** 2
    dx = psi_out.grid.dx
    values = values / (values.sum() * dx * dx)
    return G2Map(psi_out.grid, values)


def project(g2: G2Map, coordinate: str = "minus") -> G2Projection:
    """Histogram of the map over ``i - j`` (minus) or ``i + j`` (sum)."""
    n = g2.grid.n_points
    i, j = np.indices((n, n))
    if coordinate == "minus":
        key = i - j + (n - 1)
    elif coordinate == "sum":
        key = i + j
    else:
        raise ValueError(f"coordinate must be 'minus' or 'sum', got {coordinate!r}")
    values = np.bincount(key.ravel(), weights=np.asarray(g2.values).ravel(), minlength=2 * n - 1)
    values *= g2.grid.dx**2
    return G2Projection(coordinate, np.arange(-(n - 1), n), values)


def peak_metric(projection: G2Projection, peak_halfwidth: int, outer: int | None = None) -> float:
    """Mean over ``|d| <= peak_halfwidth`` divided by the median background.

    The background is ``|d| > 4 * peak_halfwidth``, optionally limited to
    ``|d| <= outer`` (an annulus around the peak).
    """
    offsets = np.abs(projection.offsets)
    n = (len(offsets) + 1) // 2
    if not 0 <= peak_halfwidth < n / 4:
        raise ValueError(f"peak_halfwidth must lie in [0, {n / 4})")
    values = np.asarray(projection.values, dtype=float)
    peak = values[offsets <= peak_halfwidth].mean()
    sel = offsets > 4 * peak_halfwidth
    if outer is not None:
        sel &= offsets <= outer
    if not np.any(sel):
        raise DegenerateBackground("background region is empty")
    background = float(np.median(values[sel]))
    if background <= 0:
        raise DegenerateBackground("median background is not positive")
    return float(peak / background)


def lowpass_denoise(projection: G2Projection, cutoff: float) -> G2Projection:
    """Hard low-pass at ``cutoff`` times Nyquist (DC is always kept)."""
    if not 0 < cutoff <= 1:
        raise ValueError("cutoff must lie in (0, 1]")
    values = np.asarray(projection.values, dtype=float)
    if cutoff == 1:
        return G2Projection(projection.coordinate, projection.offsets, values.copy())
    spec = np.fft.rfft(values)
    freq = np.fft.rfftfreq(len(values))
    spec[freq > cutoff * 0.5] = 0
    out = np.fft.irfft(spec, n=len(values))
    return G2Projection(projection.coordinate, projection.offsets, out)


@dataclass(frozen=True)
class DetectorParams:
    mu_pair: float = 0.2
    p_dark: float = 1e-3
    threshold: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.mu_pair) and self.mu_pair >= 0):
            raise InvalidDetectorParams("mu_pair must be finite and >= 0")
        if not 0 <= self.p_dark < 1:
            raise InvalidDetectorParams("p_dark must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class FrameStack:
    frames: np.ndarray  # (n_frames, n_pixels) uint8
    detector: DetectorParams
    seed: int | None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.frames.shape[1]


def _chunk_rng(seed, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _frame_chunk(prob, n_pix, detector, n, rng):
    pairs = rng.poisson(detector.mu_pair, size=n)
    total = int(pairs.sum())
    counts = np.zeros((n, n_pix), dtype=np.int64)
    if total:
        flat = rng.choice(prob.size, size=total, p=prob)
        x1, x2 = np.divmod(flat, n_pix)
        frame = np.repeat(np.arange(n), pairs)
        np.add.at(counts, (frame, x1), 1)
        np.add.at(counts, (frame, x2), 1)
    if detector.p_dark > 0:
        # Poisson rate giving dark-count probability p_dark per pixel and frame
        rate = -np.log1p(-detector.p_dark)
        counts += rng.poisson(rate, size=(n, n_pix))
    if detector.threshold:
        counts = np.minimum(counts, 1)
    return np.minimum(counts, 255).astype(np.uint8)


def simulate_frames(g2: G2Map, detector: DetectorParams, n_frames: int, seed, threads: int = 1) -> FrameStack:
    """Sparse photon-counting frames drawn from the joint density ``g2``.

    Each chunk of ``FRAME_CHUNK`` frames uses its own sub-stream spawned from
    ``seed``, so the result does not depend on how chunks are scheduled.
    """
    if n_frames < 0:
        raise ValueError("n_frames must be >= 0")
    n_pix = g2.grid.n_points
    prob = np.clip(np.asarray(g2.values, dtype=float).ravel(), 0, None)
    if detector.mu_pair > 0:
        s = prob.sum()
        if not s > 0:
            raise InvalidDetectorParams("correlation map carries no probability")
        prob = prob / s
    out = np.empty((n_frames, n_pix), dtype=np.uint8)
    starts = list(range(0, n_frames, FRAME_CHUNK))

    def fill(c):
        start = starts[c]
        n = min(FRAME_CHUNK, n_frames - start)
        out[start:start + n] = _frame_chunk(prob, n_pix, detector, n, _chunk_rng(seed, c))

    _run(fill, range(len(starts)), threads)
    return FrameStack(out, detector, seed)


def _run(func, items, threads):
    if threads <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


BACKGROUNDS = ("next", "mean")


def estimate_g2(
    stack: FrameStack,
    grid: Grid1D | None = None,
    threads: int = 1,
    background: str = "next",
) -> G2Map:
    """Accidental-subtracted correlation estimate (raw scale).

    With ``background="next"`` the accidentals come from consecutive frames,
    ``G[r1, r2] = mean_i ( I_i(r1) I_i(r2) - I_i(r1) I_{i+1}(r2) )``, which
    is not symmetric frame by frame, so the result is symmetrized.  With
    ``background="mean"`` they are the product of the mean frames over the
    same ``M - 1`` frames.  Partial sums over fixed frame chunks are reduced
    in chunk order, so the result does not depend on ``threads``.
    """
    if background not in BACKGROUNDS:
        raise ValueError(f"background must be one of {BACKGROUNDS}, got {background!r}")
    m = stack.n_frames
    if m < 2:
        raise TooFewFrames("need at least two frames")
    frames = stack.frames
    n_pix = stack.n_pixels

    def partial(start):
        stop = min(start + FRAME_CHUNK, m - 1)
        a = frames[start:stop].astype(np.float64)
        if background == "mean":
            return a.T @ a, a.sum(axis=0)
        b = frames[start + 1:stop + 1].astype(np.float64)
        return a.T @ a - a.T @ b, None

    acc = np.zeros((n_pix, n_pix))
    total = np.zeros(n_pix)
    for part, sums in _run(partial, range(0, m - 1, FRAME_CHUNK), threads):
        acc += part
        if sums is not None:
            total += sums
    acc /= m - 1
    if background == "mean":
        mean = total / (m - 1)
        acc -= np.outer(mean, mean)
    acc = 0.5 * (acc + acc.T)
    if grid is None:
        grid = Grid1D(n_pix, float(n_pix))
    return G2Map(grid, acc)


def save_frames(stack: FrameStack, path) -> None:
    """Header (magic, u32 version, u32 pixels), uint8 frames, plus ``.json`` sidecar."""
    path = Path(path)
    header = FRAME_MAGIC + struct.pack("<II", FRAME_VERSION, stack.n_pixels)
    path.write_bytes(header + np.ascontiguousarray(stack.frames, dtype=np.uint8).tobytes())
    meta = {"n_frames": stack.n_frames, "n_pixels": stack.n_pixels, "seed": stack.seed,
            "detector": asdict(stack.detector)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_frames(path) -> FrameStack:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:8] != FRAME_MAGIC:
        raise FormatError(f"{path}: not a frame stack")
    version, n_pix = struct.unpack("<II", raw[8:16])
    if version != FRAME_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[16:]
    if n_pix == 0 or len(body) % n_pix:
        raise FormatError(f"{path}: truncated frame data")
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    frames = np.frombuffer(body, dtype=np.uint8).reshape(-1, n_pix).copy()
    if meta.get("n_frames") != frames.shape[0]:
        raise FormatError(f"{path}: frame count disagrees with sidecar")
    return FrameStack(frames, DetectorParams(**meta["detector"]), meta.get("seed"))


def projection_to_csv(projection: G2Projection, path) -> None:
    rows = [f"offset,{projection.coordinate}"]
    rows += [f"{int(d)},{float(v)!r}" for d, v in zip(projection.offsets, projection.values)]
    Path(path).write_text("\n".join(rows) + "\n")


def map_to_csv(g2: G2Map, path) -> None:
    np.savetxt(path, np.asarray(g2.values), delimiter=",", fmt="%.17g")
