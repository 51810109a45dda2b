"""Serialization: binary state snapshots, the diagnostics CSV and run metadata.

Snapshot layout (all little-endian)::

    magic        4 bytes   b"CHC1"
    version      u4
    Lx, Ly       f8 f8
    nx, ny       u4 u4
    t            f8
    n            u8
    digest       32 bytes  sha256 of ModelParams.digest_string()
    ref means    f8 x 3    <theta_0>, <chi_0>, <chi_1>
    theta        f8 (nx*ny)
    qx, qy       f8 (nx*ny) each
    chi          f8 (nx*ny)
    xi           f8 (2*nx)  bottom row then top row
    v            f8 (nx*ny)

Arrays are written in C order of their in-memory shapes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticRecord
from .grid import GridSpec
from .integrator import SystemState
from .model import ModelParams

MAGIC = b"CHC1"
VERSION = 1
_HEADER = struct.Struct("<4sIddIIdQ32s3d")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    grid: GridSpec
    state: SystemState
    digest: bytes
    ref_means: tuple[float, float, float]


def params_digest(params: ModelParams) -> bytes:
    return hashlib.sha256(params.digest_string().encode("utf-8")).digest()


def encode_snapshot(grid: GridSpec, state: SystemState, params: ModelParams | None = None,
                    ref_means: Sequence[float] = (0.0, 0.0, 0.0), digest: bytes | None = None) -> bytes:
    if digest is None:
        if params is None:
            raise ValueError("either params or digest is required")
        digest = params_digest(params)
    head = _HEADER.pack(MAGIC, VERSION, grid.Lx, grid.Ly, grid.nx, grid.ny, float(state.t), int(state.n),
                        digest, *map(float, ref_means))
    buf = io.BytesIO()
    buf.write(head)
    for arr in (state.theta, state.q[0], state.q[1], state.chi, state.xi, state.v):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated snapshot header")
    magic, version, lx, ly, nx, ny, t, n, digest, m0, m1, m2 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    grid = GridSpec(lx, ly, nx, ny)
    cells = nx * ny
    expected = _HEADER.size + 8 * (5 * cells + 2 * nx)
    if len(data) != expected:
        raise SnapshotError(f"snapshot size {len(data)} does not match grid ({expected} expected)")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    parts = np.split(flat, np.cumsum([cells, cells, cells, cells, 2 * nx]))
    theta, qx, qy, chi, xi, v = parts
    q = np.stack([qx.reshape(nx, ny), qy.reshape(nx, ny)])
    state = SystemState(theta.reshape(nx, ny), q, chi.reshape(nx, ny), xi.reshape(2, nx),
                        v.reshape(nx, ny), t, n)
    return Snapshot(grid, state, digest, (m0, m1, m2))


def write_snapshot(path: str | Path, grid: GridSpec, state: SystemState, params: ModelParams,
                   ref_means: Sequence[float]) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(grid, state, params, ref_means))
    return path


def read_snapshot(path: str | Path) -> Snapshot:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from None
    return decode_snapshot(data)


# -- diagnostics CSV -----------------------------------------------------------

def format_row(rec: DiagnosticRecord) -> list[str]:
    return ["%.17g" % x for x in rec.as_row()]


class CsvWriter:
    """Streams records to ``diagnostics.csv`` (header row, ``%.17g`` floats)."""

    def __init__(self, path: str | Path, header: bool = True):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        if header:
            self._w.writerow(CSV_COLUMNS)

    def __call__(self, rec: DiagnosticRecord) -> None:
        self._w.writerow(format_row(rec))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path: str | Path) -> list[DiagnosticRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: header does not match the diagnostics schema")
    out = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"{path}:{k}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        out.append(DiagnosticRecord(*(float(x) for x in row)))
    return out


def records_to_array(records: Iterable[DiagnosticRecord]) -> np.ndarray:
    return np.array([r.as_row() for r in records], dtype=float).reshape(-1, len(CSV_COLUMNS))


# -- run metadata --------------------------------------------------------------

@dataclass(frozen=True)
class RunMeta:
    scenario: str
    Lx: float
    Ly: float
    nx: int
    ny: int
    dt: float
    t_end: float
    cadence: int
    epsilon: float
    sigma: float
    alpha: float
    kappa1: float
    kappa2: float
    mean_theta0: float
    mean_chi0: float
    mean_chi1: float
    area: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunMeta":
        return cls(**json.loads(text))


def write_meta(path: str | Path, meta: RunMeta) -> None:
    Path(path).write_text(meta.to_json(), encoding="utf-8")


def read_meta(path: str | Path) -> RunMeta:
    return RunMeta.from_json(Path(path).read_text(encoding="utf-8"))
