"""Binary stack/raster formats, CSV tables, and run manifests.

Stack file ("TSTK"): magic, format version u32, N u32, rows u32, cols u32,
wavelength f64 [m], range f64 [m], incidence f64 [rad], N baselines f64 [m],
then N*rows*cols complex64 samples (f32 real, f32 imag), acquisition-major
then row-major. Little-endian throughout. Payloads are complex64 to halve
I/O; computation upcasts to double precision.

Float rasters ("HGTF") and u8 rasters ("KMAP"): magic, rows u32, cols u32,
then row-major payload (f32 or u8).
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .model import AcquisitionGeometry
from .simulate import InsarStack

__all__ = [
    "FormatError",
    "STACK_MAGIC",
    "STACK_VERSION",
    "RASTER_MAGIC",
    "KMAP_MAGIC",
    "stack_file_size",
    "write_stack",
    "read_stack",
    "write_raster",
    "read_raster",
    "write_kmap",
    "read_kmap",
    "write_pgm_preview",
    "write_scatterer_csv",
    "read_scatterer_csv",
    "write_manifest",
    "read_manifest",
]

STACK_MAGIC = b"TSTK"
STACK_VERSION = 1
RASTER_MAGIC = b"HGTF"
KMAP_MAGIC = b"KMAP"

_STACK_HEADER = struct.Struct("<4sIIIIddd")
_RASTER_HEADER = struct.Struct("<4sII")

SCATTERER_COLUMNS = ["row", "col", "k", "elevation_m", "height_m", "amp_re", "amp_im"]


class FormatError(RuntimeError):
    """Corrupt or mismatched binary/CSV content."""


def stack_file_size(n: int, rows: int, cols: int) -> int:
    """Total byte size of a stack file with the given dimensions."""
    return _STACK_HEADER.size + 8 * n + 8 * n * rows * cols


def write_stack(path, stack: InsarStack) -> None:
    geom = stack.geometry
    n, rows, cols = stack.shape
    with open(path, "wb") as fh:
        fh.write(
            _STACK_HEADER.pack(
                STACK_MAGIC,
                STACK_VERSION,
                n,
                rows,
                cols,
                geom.wavelength,
                geom.slant_range,
                geom.incidence_angle,
            )
        )
        fh.write(np.ascontiguousarray(geom.baselines, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(stack.images, dtype="<c8").tobytes())


def read_stack(path) -> InsarStack:
    """Read a stack file; the master acquisition is index 0 by convention."""
    raw = Path(path).read_bytes()
    if len(raw) < _STACK_HEADER.size:
        raise FormatError(f"{path}: truncated stack header")
    magic, version, n, rows, cols, wavelength, slant_range, incidence = _STACK_HEADER.unpack_from(raw)
    if magic != STACK_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {STACK_MAGIC!r}")
    if version != STACK_VERSION:
        raise FormatError(f"{path}: unsupported stack version {version}")
    offset = _STACK_HEADER.size
    expected = stack_file_size(n, rows, cols)
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} does not match header ({expected} expected)")
    baselines = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
    offset += 8 * n
    payload = np.frombuffer(raw, dtype="<c8", count=n * rows * cols, offset=offset)
    geom = AcquisitionGeometry(wavelength, slant_range, incidence, baselines.copy())
    images = payload.reshape(n, rows, cols).astype(np.complex128)
    return InsarStack(geom, images, master_index=0)


def _write_raster(path, magic, arr, dtype) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError("raster must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(magic, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read_raster(path, magic, dtype, itemsize):
    raw = Path(path).read_bytes()
    if len(raw) < _RASTER_HEADER.size:
        raise FormatError(f"{path}: truncated raster header")
    got, rows, cols = _RASTER_HEADER.unpack_from(raw)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if len(raw) != _RASTER_HEADER.size + itemsize * rows * cols:
        raise FormatError(f"{path}: payload size mismatch")
    data = np.frombuffer(raw, dtype=dtype, offset=_RASTER_HEADER.size)
    return data.reshape(rows, cols).copy()


def write_raster(path, arr) -> None:
    """Write a float32 raster (heights, ENL, any per-pixel float field)."""
    _write_raster(path, RASTER_MAGIC, arr, "<f4")


def read_raster(path) -> np.ndarray:
    return _read_raster(path, RASTER_MAGIC, "<f4", 4).astype(float)


def write_kmap(path, arr) -> None:
    """Write a u8 raster (per-pixel model orders)."""
    _write_raster(path, KMAP_MAGIC, arr, "u1")


def read_kmap(path) -> np.ndarray:
    return _read_raster(path, KMAP_MAGIC, "u1", 1)


def write_pgm_preview(path, arr) -> None:
    """8-bit min-max stretched PGM preview of a float raster; NaN maps to 0."""
    arr = np.asarray(arr, dtype=float)
    finite = np.isfinite(arr)
    if finite.any():
        lo = float(arr[finite].min())
        hi = float(arr[finite].max())
        span = hi - lo if hi > lo else 1.0
        scaled = np.zeros(arr.shape, dtype=np.uint8)
        scaled[finite] = np.clip((arr[finite] - lo) / span * 255.0, 0, 255).astype(np.uint8)
    else:
        scaled = np.zeros(arr.shape, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(scaled.tobytes())


def write_scatterer_csv(path, scatterers, heights) -> None:
    """Scatterer table CSV: row, col, k, elevation_m, height_m, amp_re, amp_im."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCATTERER_COLUMNS)
        for rec, height in zip(scatterers, heights):
            writer.writerow(
                [
                    int(rec["row"]),
                    int(rec["col"]),
                    int(rec["k"]),
                    repr(float(rec["elevation"])),
                    repr(float(height)),
                    repr(float(rec["amplitude"].real)),
                    repr(float(rec["amplitude"].imag)),
                ]
            )


def read_scatterer_csv(path):
    """Read a scatterer table back as a list of dicts."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCATTERER_COLUMNS:
            raise FormatError(f"{path}: unexpected scatterer CSV columns {reader.fieldnames}")
        for line in reader:
            out.append(
                {
                    "row": int(line["row"]),
                    "col": int(line["col"]),
                    "k": int(line["k"]),
                    "elevation_m": float(line["elevation_m"]),
                    "height_m": float(line["height_m"]),
                    "amp_re": float(line["amp_re"]),
                    "amp_im": float(line["amp_im"]),
                }
            )
    return out


def write_manifest(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
