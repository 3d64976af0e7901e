"""File formats: the binary matrix container, CSV writers, heatmap PNGs.

The binary matrix format is the toolkit's one wire format for numeric grids
(spectra, reduced spectra as 1 x N matrices, feature matrices, noise grids):

    bytes 0..15   magic + version, ``b"FREQFORENSICS\\x00V1"``
    bytes 16..19  u32 little-endian width (number of columns)
    bytes 20..23  u32 little-endian height (number of rows)
    remainder     height * width IEEE-754 f64 values, little-endian, row-major

Round-trips are bit-exact. All writers go through write-then-rename so
readers never observe partial files.
"""

import csv
import io
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ParameterError

MAGIC = b"FREQFORENSICS\x00V1"


def matrix_to_bytes(array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2:
        raise FormatError(f"matrix format stores 2D arrays, got shape {array.shape}")
    h, w = array.shape
    header = MAGIC + struct.pack("<II", w, h)
    return header + np.ascontiguousarray(array).astype("<f8").tobytes()


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < len(MAGIC) + 8:
        raise FormatError("matrix data truncated before header")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic; not a freqforensics matrix")
    w, h = struct.unpack("<II", data[len(MAGIC) : len(MAGIC) + 8])
    expected = len(MAGIC) + 8 + 8 * w * h
    if len(data) != expected:
        raise FormatError(f"matrix payload size mismatch: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=len(MAGIC) + 8)
    return values.reshape(h, w).astype(np.float64)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write data to path via a temp file + rename in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix(path, array: np.ndarray) -> None:
    atomic_write_bytes(path, matrix_to_bytes(array))


def read_matrix(path) -> np.ndarray:
    return matrix_from_bytes(Path(path).read_bytes())


def write_csv(path, header: list[str], rows, comments: dict | None = None) -> None:
    """Write a CSV with a header row, preceded by optional ``# key=value`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as f:
            for key, value in (comments or {}).items():
                f.write(f"# {key}={value}\n")
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_spectrum_csv(path, values: np.ndarray, kind: str) -> None:
    """Long-format spectrum CSV with columns (row, col, value)."""
    values = np.asarray(values)
    rows = (
        (r, c, repr(float(values[r, c])))
        for r in range(values.shape[0])
        for c in range(values.shape[1])
    )
    write_csv(path, ["row", "col", "value"], rows, comments={"kind": kind})


def write_reduced_csv(path, bins: np.ndarray, normalization: str, extra: dict | None = None) -> None:
    bins = np.asarray(bins)
    rows = ((i, repr(float(bins[i]))) for i in range(bins.size))
    comments = {"normalization": normalization}
    comments.update(extra or {})
    write_csv(path, ["bin", "value"], rows, comments=comments)


def render_heatmap(
    values: np.ndarray,
    clip_lo: float,
    clip_hi: float,
    log10_scale: bool = True,
) -> np.ndarray:
    """Map a nonnegative grid to 8-bit intensities.

    Values are clipped to [clip_lo, clip_hi] and mapped linearly (in log10
    when ``log10_scale``) onto 0..255.
    """
    if not (clip_lo < clip_hi):
        raise ParameterError(f"need clip_lo < clip_hi, got [{clip_lo}, {clip_hi}]")
    values = np.clip(np.asarray(values, dtype=np.float64), clip_lo, clip_hi)
    if log10_scale:
        if clip_lo <= 0:
            raise ParameterError("log10 heatmap requires clip_lo > 0")
        lo, hi = math.log10(clip_lo), math.log10(clip_hi)
        scaled = (np.log10(values) - lo) / (hi - lo)
    else:
        scaled = (values - clip_lo) / (clip_hi - clip_lo)
    return np.round(scaled * 255.0).astype(np.uint8)


def save_heatmap_png(path, values, clip_lo, clip_hi, log10_scale=True) -> None:
    intensities = render_heatmap(values, clip_lo, clip_hi, log10_scale)
    buf = io.BytesIO()
    Image.fromarray(intensities, mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
