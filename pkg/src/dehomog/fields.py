"""Field containers, angle normalization and the binary field file format.

Every other module exchanges data through the two container types defined
here.  Files use a fixed 64-byte little-endian header followed by a raw
row-major payload, so they can be parsed from any language without a
library.  An optional sidecar ``<path>.meta`` carries scalar metadata as
plain ``key=value`` lines.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"DHFIELD1"
HEADER_SIZE = 64

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_TO_CODE = {np.dtype("float32"): 1, np.dtype("float64"): 2}

KIND_SCALAR = 1
KIND_ORIENTATION = 2


class FieldFormatError(ValueError):
    """Raised for malformed field files (bad magic, sizes, dtype codes)."""


@dataclass(frozen=True)
class Grid2D:
    """Regular grid of nx x ny square cells with element size h."""

    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must have at least one cell, got {self.nx}x{self.ny}")
        if not (self.h > 0.0) or not math.isfinite(self.h):
            raise ValueError(f"element size must be positive, got {self.h}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)


def normalize_angle(theta_raw):
    """Reduce an angle (scalar or array) to the 2-directional range [0, pi).

    Orientations are invariant under rotations of pi, so any finite angle
    has a unique representative in [0, pi).
    """
    theta = np.asarray(theta_raw, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise ValueError("normalize_angle requires finite input")
    out = np.mod(theta, np.pi)
    # np.mod can return pi itself for tiny negative inputs
    out = np.where(out >= np.pi, 0.0, out)
    if np.isscalar(theta_raw) or np.ndim(theta_raw) == 0:
        return float(out)
    return out


class ScalarField:
    """A real-valued field on a Grid2D, optionally with multiple channels.

    values has shape (ny, nx) for channels == 1 and (ny, nx, channels)
    otherwise.  Instances are immutable after construction.
    """

    kind = KIND_SCALAR

    def __init__(self, grid: Grid2D, values: np.ndarray, channels: int = 1):
        values = np.asarray(values)
        if channels < 1:
            raise ValueError("channels must be positive")
        expected = grid.shape if channels == 1 else grid.shape + (channels,)
        if values.shape != expected:
            raise ValueError(f"values shape {values.shape} does not match {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.channels = channels
        self.values = np.ascontiguousarray(values)
        self.values.setflags(write=False)

    def astype(self, dtype) -> "ScalarField":
        return ScalarField(self.grid, self.values.astype(dtype), self.channels)


class OrientationField:
    """Per-cell 2-directional orientation; angles always stored in [0, pi)."""

    kind = KIND_ORIENTATION

    def __init__(self, grid: Grid2D, theta: np.ndarray):
        theta = np.asarray(theta)
        if theta.shape != grid.shape:
            raise ValueError(f"theta shape {theta.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.theta = np.ascontiguousarray(normalize_angle(theta).astype(theta.dtype, copy=False))
        self.theta.setflags(write=False)

    def vectors(self) -> np.ndarray:
        """Unit direction vectors (..., 2) for the stored angles."""
        return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)


def _pack_header(dtype_code: int, kind: int, channels: int, ny: int, nx: int) -> bytes:
    head = struct.pack("<8sIIIII", MAGIC, dtype_code, kind, channels, ny, nx)
    return head + b"\x00" * (HEADER_SIZE - len(head))


def write_field(field, path, meta: dict | None = None) -> None:
    """Write a ScalarField or OrientationField; round-trips bit-exactly."""
    path = Path(path)
    if isinstance(field, OrientationField):
        values, channels, kind = field.theta, 1, KIND_ORIENTATION
    elif isinstance(field, ScalarField):
        values, channels, kind = field.values, field.channels, KIND_SCALAR
    else:
        raise TypeError(f"cannot serialize {type(field).__name__}")
    dtype = np.dtype(values.dtype)
    if dtype not in _DTYPE_TO_CODE:
        values = values.astype(np.float64)
        dtype = values.dtype
    code = _DTYPE_TO_CODE[dtype]
    ny, nx = field.grid.shape
    with open(path, "wb") as fh:
        fh.write(_pack_header(code, kind, channels, ny, nx))
        fh.write(np.ascontiguousarray(values, dtype=dtype.newbyteorder("<")).tobytes())
    if meta is None:
        meta = {}
    meta = {"h": field.grid.h, **meta}
    write_meta(meta_path(path), meta)


def read_field(path):
    """Read a field file written by write_field.

    Returns a ScalarField or an OrientationField depending on the header
    kind code.  Element size h is restored from the sidecar when present.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise FieldFormatError(f"{path}: truncated header")
        magic, code, kind, channels, ny, nx = struct.unpack("<8sIIIII", header[:28])
        if magic != MAGIC:
            raise FieldFormatError(f"{path}: bad magic {magic!r}")
        if code not in _DTYPE_CODES:
            raise FieldFormatError(f"{path}: unsupported dtype code {code}")
        if channels < 1 or ny < 1 or nx < 1:
            raise FieldFormatError(f"{path}: invalid dimensions {ny}x{nx}x{channels}")
        dtype = _DTYPE_CODES[code]
        payload = fh.read()
    count = ny * nx * channels
    if len(payload) != count * dtype.itemsize:
        raise FieldFormatError(
            f"{path}: payload has {len(payload)} bytes, header declares {count * dtype.itemsize}"
        )
    values = np.frombuffer(payload, dtype=dtype).astype(dtype.base, copy=True)
    meta = read_meta(meta_path(path)) if meta_path(path).exists() else {}
    grid = Grid2D(nx, ny, float(meta.get("h", 1.0)))
    if kind == KIND_ORIENTATION:
        if channels != 1:
            raise FieldFormatError(f"{path}: orientation fields are single-channel")
        return OrientationField(grid, values.reshape(ny, nx))
    if kind == KIND_SCALAR:
        shape = (ny, nx) if channels == 1 else (ny, nx, channels)
        return ScalarField(grid, values.reshape(shape), channels)
    raise FieldFormatError(f"{path}: unknown field kind {kind}")


def meta_path(path) -> Path:
    return Path(str(path) + ".meta")


def write_meta(path, meta: dict) -> None:
    lines = [f"{k}={_fmt_value(v)}" for k, v in meta.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = _parse_value(value.strip())
    return meta


def _fmt_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s: str):
    if s in ("True", "False"):
        return s == "True"
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s
