"""Binary persistence of transmission matrices.

Layout: 8-byte magic ``TPSHMAT1``, little-endian u32 header length, UTF-8
JSON header ``{rows, cols, dtype: "c128le", basis, seed, segmentation, ...}``
and a row-major payload of little-endian float64 ``(re, im)`` pairs.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from tpshape.errors import FormatError
from tpshape.optical_system import SlmMask
from tpshape.spdc_state import Grid1D
from tpshape.wavefront import TransmissionMatrix

MAGIC = b"TPSHMAT1"
DTYPE = "c128le"


def _segmentation(tm: TransmissionMatrix):
    if tm.template is None:
        return None
    grid = tm.template.grid
    return {
        "n_points": grid.n_points,
        "extent": grid.extent,
        "segment_index": [int(v) for v in tm.template.segment_index],
    }


def encode_tm(tm: TransmissionMatrix) -> bytes:
    entries = np.ascontiguousarray(tm.entries, dtype="<c16")
    if not np.all(np.isfinite(entries)):
        raise FormatError("refusing to write non-finite matrix entries")
    rows, cols = entries.shape
    header = {
        "rows": rows,
        "cols": cols,
        "dtype": DTYPE,
        "basis": tm.basis,
        "seed": tm.seed,
        "phase_steps": tm.phase_steps,
        "reference": tm.reference,
        "modulated": [list(p) for p in tm.modulated],
        "segmentation": _segmentation(tm),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + entries.tobytes()


def decode_tm(raw: bytes) -> TransmissionMatrix:
    if len(raw) < 12 or raw[:8] != MAGIC:
        raise FormatError("bad magic: not a transmission-matrix file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + hlen:
        raise FormatError("truncated header")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
        rows, cols = int(header["rows"]), int(header["cols"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from exc
    if header.get("dtype") != DTYPE:
        raise FormatError(f"unsupported dtype {header.get('dtype')!r}")
    payload = raw[12 + hlen:]
    if len(payload) != rows * cols * 16:
        raise FormatError(f"payload has {len(payload)} bytes, expected {rows * cols * 16}")
    entries = np.frombuffer(payload, dtype="<c16").reshape(rows, cols).astype(complex)
    template = None
    seg = header.get("segmentation")
    if seg is not None:
        grid = Grid1D(int(seg["n_points"]), float(seg["extent"]))
        template = SlmMask(grid, np.asarray(seg["segment_index"], dtype=np.int64))
        if template.n_segments != cols:
            raise FormatError("segmentation does not match the column count")
    return TransmissionMatrix(
        entries=entries,
        basis=header.get("basis", "pixel"),
        modulated=tuple(tuple(p) for p in header.get("modulated", [])),
        phase_steps=int(header.get("phase_steps", 4)),
        seed=header.get("seed"),
        template=template,
        reference=header.get("reference", ""),
    )


def save_tm(tm: TransmissionMatrix, path) -> None:
    """Write atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_tm(tm))
    os.replace(tmp, path)


def load_tm(path) -> TransmissionMatrix:
    return decode_tm(Path(path).read_bytes())
