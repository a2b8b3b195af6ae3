"""Raster files: binary PGM (P5) and CSV with a JSON sidecar.

PGM samples are divided by maxval and log-transformed with the reflectance
floor. CSV files hold positive reflectances, one raster row per line; the
sidecar (same stem, ``.json``) is one JSON object {rows, cols, pitch_m}.
Every reader error names the byte offset (PGM) or 1-based line (CSV).
"""

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from height_engine.errors import RasterIOError
from height_engine.geometry import DEFAULT_PITCH_M
from height_engine.raster import Raster

logger = logging.getLogger(__name__)

PGM_MAXVAL = 65535


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def load_raster(path: str | Path, pitch: float = DEFAULT_PITCH_M) -> Raster:
    path = Path(path)
    if not path.exists():
        raise RasterIOError("file not found", str(path))
    if path.suffix.lower() == ".pgm":
        raster = _load_pgm(path, pitch)
    elif path.suffix.lower() == ".csv":
        raster = _load_csv(path, pitch)
    else:
        raise RasterIOError(f"unsupported raster format {path.suffix!r}", str(path))
    logger.info("Loaded %s: %dx%d", path, raster.rows, raster.cols)
    return raster


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def _pgm_header(data: bytes, path: Path) -> tuple[list[int], int]:
    """Parse magic, width, height and maxval; return them and the raster start offset."""
    fields: list[int] = []
    pos = 0
    if data[:2] != b"P5":
        raise RasterIOError("malformed header: expected magic P5", str(path), 0)
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise RasterIOError("malformed header: expected an integer", str(path), start)
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise RasterIOError("malformed header: missing whitespace before raster", str(path), pos)
    return fields, pos + 1


def _load_pgm(path: Path, pitch: float) -> Raster:
    data = path.read_bytes()
    (cols, rows, maxval), offset = _pgm_header(data, path)
    if cols < 1 or rows < 1 or not 0 < maxval <= PGM_MAXVAL:
        raise RasterIOError(f"malformed header: size {cols}x{rows}, maxval {maxval}", str(path), 0)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = rows * cols * dtype.itemsize
    available = len(data) - offset
    if available < expected:
        raise RasterIOError(
            f"truncated raster: {available} of {expected} bytes", str(path), len(data)
        )
    samples = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=offset)
    over = np.flatnonzero(samples > maxval)
    if over.size:
        raise RasterIOError(
            f"sample {samples[over[0]]} exceeds maxval {maxval}",
            str(path),
            offset + int(over[0]) * dtype.itemsize,
        )
    reflectance = samples.reshape(rows, cols).astype(float) / maxval
    return Raster.from_reflectance(reflectance, pitch)


def save_pgm(values: np.ndarray, path: str | Path, maxval: int = PGM_MAXVAL) -> None:
    """Write integer samples in [0, maxval] as binary PGM."""
    samples = np.asarray(values)
    if samples.ndim != 2 or samples.min() < 0 or samples.max() > maxval:
        raise RasterIOError(f"samples must be a 2-D array in [0, {maxval}]", str(path))
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{samples.shape[1]} {samples.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + samples.astype(dtype).tobytes())


def heat_map(heights: np.ndarray, valid: np.ndarray, maxval: int = PGM_MAXVAL) -> np.ndarray:
    """Min-max scale valid cells to [1, maxval].

    Gray level 0 is reserved for invalid cells, so the lowest valid height
    stays distinguishable from a flagged window. A single valid height maps
    to maxval.
    """
    out = np.zeros(heights.shape, dtype=np.int64)
    if not valid.any():
        return out
    cells = heights[valid]
    lo, hi = float(cells.min()), float(cells.max())
    if hi == lo:
        out[valid] = maxval
    else:
        out[valid] = 1 + np.rint((cells - lo) / (hi - lo) * (maxval - 1)).astype(np.int64)
    return out


# ---------------------------------------------------------------------------
# CSV + sidecar
# ---------------------------------------------------------------------------

def _read_sidecar(path: Path) -> dict:
    side = sidecar_path(path)
    if not side.exists():
        raise RasterIOError("missing JSON sidecar", str(side))
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as e:
        raise RasterIOError(f"malformed sidecar: {e.msg}", str(side), e.lineno) from e
    for key in ("rows", "cols"):
        if not isinstance(meta.get(key), int) or meta[key] < 1:
            raise RasterIOError(f"sidecar field {key!r} must be a positive integer", str(side), 1)
    pitch = meta.get("pitch_m", DEFAULT_PITCH_M)
    if not isinstance(pitch, (int, float)) or not pitch > 0:
        raise RasterIOError("sidecar field 'pitch_m' must be positive", str(side), 1)
    return meta


def _load_csv(path: Path, pitch: float) -> Raster:
    """A sidecar ``pitch_m`` wins over ``pitch``."""
    meta = _read_sidecar(path)
    rows, cols = meta["rows"], meta["cols"]
    values = np.empty((rows, cols))
    n_lines = 0
    with open(path, newline="") as f:
        for line_no, record in enumerate(csv.reader(f), start=1):
            if not record:
                continue
            n_lines += 1
            if n_lines > rows:
                raise RasterIOError(f"dimension mismatch: more than {rows} rows", str(path), line_no)
            if len(record) != cols:
                raise RasterIOError(
                    f"dimension mismatch: {len(record)} values, expected {cols}", str(path), line_no
                )
            try:
                row = [float(v) for v in record]
            except ValueError as e:
                raise RasterIOError(f"not a number ({e})", str(path), line_no) from e
            if not all(math.isfinite(v) for v in row):
                raise RasterIOError("non-finite value", str(path), line_no)
            values[n_lines - 1] = row
    if n_lines != rows:
        raise RasterIOError(f"dimension mismatch: {n_lines} rows, expected {rows}", str(path), n_lines)
    return Raster.from_reflectance(values, float(meta.get("pitch_m", pitch)))


def save_raster_csv(raster: Raster, path: str | Path) -> None:
    """Write exp(values) so that load_raster reproduces the raster."""
    path = Path(path)
    np.savetxt(path, np.exp(raster.values), delimiter=",", fmt="%.17g")
    sidecar_path(path).write_text(
        json.dumps({"rows": raster.rows, "cols": raster.cols, "pitch_m": raster.pitch}) + "\n"
    )
