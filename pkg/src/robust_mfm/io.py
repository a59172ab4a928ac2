"""File formats: the MFM1 binary tensor, long CSV, and matrix/factor CSVs.

MFM1 layout (all little-endian)::

    offset  size  field
    0       4     magic b"MFM1"
    4       4     version (u32, currently 1)
    8       8     T  (u64)
    16      8     p1 (u64)
    24      8     p2 (u64)
    32      4     dtype code (u32, 1 = float64)
    36      8*N   payload, N = T*p1*p2 float64 in t-major / row-major order

The long CSV has a ``t,i,j,value`` header and 1-based indices; every
``(t, i, j)`` must appear exactly once. Floats are written with 17
significant digits so that they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .core import FactorFit, MatrixSeries
from .errors import ValidationError

__all__ = [
    "MAGIC",
    "VERSION",
    "DTYPE_F64",
    "fmt_float",
    "write_tensor",
    "read_tensor",
    "write_long_csv",
    "read_long_csv",
    "read_series",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_factors_csv",
    "read_factors_csv",
    "write_fit",
    "read_fit",
]

MAGIC = b"MFM1"
VERSION = 1
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sIQQQI")


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _write_bytes(path: Path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def _write_text(path: Path, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def tensor_bytes(series: MatrixSeries) -> bytes:
    T, p1, p2 = series.shape
    head = _HEADER.pack(MAGIC, VERSION, T, p1, p2, DTYPE_F64)
    return head + np.ascontiguousarray(series.data, dtype="<f8").tobytes()


def write_tensor(path: str | Path, series: MatrixSeries) -> None:
    _write_bytes(Path(path), tensor_bytes(series))


def parse_tensor(buf: bytes) -> MatrixSeries:
    if len(buf) < _HEADER.size:
        raise ValidationError("tensor file is shorter than its header")
    magic, version, T, p1, p2, code = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValidationError(f"bad magic {magic!r}; not an MFM1 file")
    if version != VERSION:
        raise ValidationError(f"unsupported MFM1 version {version}")
    if code != DTYPE_F64:
        raise ValidationError(f"unsupported dtype code {code}")
    n = T * p1 * p2
    if n == 0:
        raise ValidationError("tensor dimensions must be positive")
    if len(buf) - _HEADER.size != 8 * n:
        raise ValidationError(f"payload holds {len(buf) - _HEADER.size} bytes, expected {8 * n}")
    data = np.frombuffer(buf, dtype="<f8", count=n, offset=_HEADER.size).astype(np.float64)
    return MatrixSeries(data.reshape(T, p1, p2))


def read_tensor(path: str | Path) -> MatrixSeries:
    return parse_tensor(_read_bytes(Path(path)))


def long_csv_text(series: MatrixSeries) -> str:
    T, p1, p2 = series.shape
    out = ["t,i,j,value"]
    X = series.data
    for t in range(T):
        for i in range(p1):
            for j in range(p2):
                out.append(f"{t + 1},{i + 1},{j + 1},{fmt_float(X[t, i, j])}")
    return "\n".join(out) + "\n"


def write_long_csv(path: str | Path, series: MatrixSeries) -> None:
    _write_text(Path(path), long_csv_text(series))


def parse_long_csv(text: str) -> MatrixSeries:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows or [c.strip() for c in rows[0]] != ["t", "i", "j", "value"]:
        raise ValidationError("long CSV needs the header t,i,j,value")
    body = rows[1:]
    if not body:
        raise ValidationError("long CSV has no data rows")
    try:
        idx = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in body], dtype=np.int64)
        vals = np.array([float(r[3]) for r in body], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"malformed long CSV row: {exc}") from exc
    if np.any(idx < 1):
        raise ValidationError("long CSV indices are 1-based")
    T, p1, p2 = (int(v) for v in idx.max(axis=0))
    if len(body) != T * p1 * p2:
        raise ValidationError(f"long CSV has {len(body)} rows, expected T*p1*p2 = {T * p1 * p2}")
    flat = ((idx[:, 0] - 1) * p1 + idx[:, 1] - 1) * p2 + idx[:, 2] - 1
    if np.unique(flat).size != flat.size:
        raise ValidationError("long CSV lists some (t, i, j) more than once")
    data = np.empty(T * p1 * p2)
    data[flat] = vals
    return MatrixSeries(data.reshape(T, p1, p2))


def read_long_csv(path: str | Path) -> MatrixSeries:
    return parse_long_csv(_read_bytes(Path(path)).decode("utf-8"))


def read_series(path: str | Path) -> MatrixSeries:
    """Read either format, chosen by the leading magic bytes."""
    buf = _read_bytes(Path(path))
    if buf[:4] == MAGIC:
        return parse_tensor(buf)
    try:
        text = buf.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ValidationError(f"{path} is neither an MFM1 file nor a UTF-8 CSV") from exc
    return parse_long_csv(text)


def matrix_csv_text(A: NDArray[np.float64], prefix: str) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    head = ",".join(f"{prefix}{c + 1}" for c in range(A.shape[1]))
    lines = [head] + [",".join(fmt_float(v) for v in row) for row in A]
    return "\n".join(lines) + "\n"


def write_matrix_csv(path: str | Path, A: NDArray[np.float64], prefix: str = "k") -> None:
    _write_text(Path(path), matrix_csv_text(A, prefix))


def read_matrix_csv(path: str | Path) -> NDArray[np.float64]:
    text = _read_bytes(Path(path)).decode("utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 2:
        raise ValidationError(f"{path}: expected a header and at least one row")
    try:
        A = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if A.ndim != 2 or A.shape[1] != len(rows[0]):
        raise ValidationError(f"{path}: ragged rows")
    return A


def factors_csv_text(F: NDArray[np.float64]) -> str:
    T, k1, k2 = F.shape
    out = ["t,a,b,value"]
    for t in range(T):
        for a in range(k1):
            for b in range(k2):
                out.append(f"{t + 1},{a + 1},{b + 1},{fmt_float(F[t, a, b])}")
    return "\n".join(out) + "\n"


def write_factors_csv(path: str | Path, F: NDArray[np.float64]) -> None:
    _write_text(Path(path), factors_csv_text(np.asarray(F, dtype=np.float64)))


def read_factors_csv(path: str | Path) -> NDArray[np.float64]:
    text = _read_bytes(Path(path)).decode("utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or [c.strip() for c in rows[0]] != ["t", "a", "b", "value"]:
        raise ValidationError(f"{path}: factor CSV needs the header t,a,b,value")
    # same layout as the long series CSV
    try:
        return parse_long_csv("t,i,j,value\n" + "\n".join(",".join(r) for r in rows[1:])).data.copy()
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_fit(outdir: str | Path, fit: FactorFit) -> None:
    d = Path(outdir)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create {d}: {exc}") from exc
    write_matrix_csv(d / "R.csv", fit.R, "r")
    write_matrix_csv(d / "C.csv", fit.C, "c")
    write_factors_csv(d / "F.csv", fit.F)


def read_fit(fitdir: str | Path, normalized: bool = True) -> FactorFit:
    d = Path(fitdir)
    return FactorFit(read_matrix_csv(d / "R.csv"), read_matrix_csv(d / "C.csv"),
                     read_factors_csv(d / "F.csv"), normalized=normalized)
