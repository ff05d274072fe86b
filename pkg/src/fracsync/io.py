"""Serialization of sampled paths and trajectories.

Two formats are supported and both round-trip exactly:

* columnar CSV with header ``t,x_1,...,x_d`` (floats written with repr
  precision, RFC-4180 quoting not needed for numeric data);
* a compact binary format: magic bytes ``FSNP``, version u16, kind u8,
  Hurst f64, grid metadata (dt f64, i_min i64, n u64, d u32), then the
  values as little-endian float64 in C order.
"""

from __future__ import annotations

import io as _io
import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolationError
from .paths import Grid, NoisePath, PathKind

_MAGIC = b"FSNP"
_VERSION = 1
_KIND_CODE = {PathKind.WIENER: 0, PathKind.FRACTIONAL: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_KIND_SERIES = 2  # generic trajectory container (hurst field unused)


def write_series_csv(path: str | Path, times: np.ndarray, values: np.ndarray) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if values.shape[0] != len(times):
        values = values.T
    d = values.shape[1]
    header = "t," + ",".join(f"x_{j + 1}" for j in range(d))
    lines = [header]
    for t, row in zip(times, values):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    text = Path(path).read_text().strip().splitlines()
    if not text or not text[0].startswith("t,"):
        raise ContractViolationError(f"{path}: missing 't,x_1,...' header")
    rows = [line.split(",") for line in text[1:]]
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    return data[:, 0], data[:, 1:]


def save_path_csv(path: str | Path, noise: NoisePath) -> None:
    write_series_csv(path, noise.grid.times(), noise.values)


def load_path_csv(
    path: str | Path, kind: PathKind = PathKind.WIENER, hurst: float = 0.5
) -> NoisePath:
    """Rebuild a path from CSV; kind/hurst are not stored in this format."""
    times, values = read_series_csv(path)
    if len(times) < 1:
        raise ContractViolationError(f"{path}: empty series")
    if len(times) == 1:
        dt = 1.0
    else:
        dt = float(times[1] - times[0])
    grid = Grid.from_range(float(times[0]), float(times[-1]), dt)
    anchored = bool(np.all(values[grid.zero_index] == 0.0))
    return NoisePath(grid, values, kind, hurst, anchored=anchored)


def save_path_binary(path: str | Path, noise: NoisePath) -> None:
    buf = _io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<HBxd", _VERSION, _KIND_CODE[noise.kind], noise.hurst))
    buf.write(struct.pack("<dqQI", noise.grid.dt, noise.grid.i_min, noise.grid.n, noise.dim))
    buf.write(np.ascontiguousarray(noise.values, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_path_binary(path: str | Path) -> NoisePath:
    raw = Path(path).read_bytes()
    kind_code, hurst, dt, i_min, values = _read_fsnp(path, raw)
    if kind_code == _KIND_SERIES:
        raise ContractViolationError(f"{path}: holds a trajectory, not a noise path")
    grid = Grid(dt, i_min, i_min + values.shape[0] - 1)
    anchored = bool(np.all(values[grid.zero_index] == 0.0))
    return NoisePath(grid, values.copy(), _CODE_KIND[kind_code], hurst, anchored=anchored)


def _read_fsnp(path, raw: bytes):
    if raw[:4] != _MAGIC:
        raise ContractViolationError(f"{path}: bad magic bytes, not an FSNP file")
    version, kind_code, hurst = struct.unpack_from("<HBxd", raw, 4)
    if version != _VERSION:
        raise ContractViolationError(f"{path}: unsupported FSNP version {version}")
    dt, i_min, n, d = struct.unpack_from("<dqQI", raw, 16)
    offset = 16 + struct.calcsize("<dqQI")
    values = np.frombuffer(raw, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    return kind_code, hurst, dt, i_min, values


def series_binary_bytes(times: np.ndarray, values: np.ndarray) -> bytes:
    """Trajectory encoded in the same binary container as noise paths."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if values.shape[0] != len(times):
        values = values.T
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    i_min = round(float(times[0]) / dt) if dt else 0
    buf = _io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<HBxd", _VERSION, _KIND_SERIES, float("nan")))
    buf.write(struct.pack("<dqQI", dt, i_min, values.shape[0], values.shape[1]))
    buf.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return buf.getvalue()


def save_series_binary(path: str | Path, times: np.ndarray, values: np.ndarray) -> None:
    Path(path).write_bytes(series_binary_bytes(times, values))


def load_series_binary(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    kind_code, _, dt, i_min, values = _read_fsnp(path, raw)
    if kind_code != _KIND_SERIES:
        raise ContractViolationError(f"{path}: holds a noise path, not a trajectory")
    times = (np.arange(values.shape[0]) + i_min) * dt
    return times, values.copy()
