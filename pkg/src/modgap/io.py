"""Embedding files (binary EMB1 and CSV), label files and JSON report envelopes.

EMB1 layout, little-endian::

    bytes 0-3    b"EMB1"
    bytes 4-5    u16 version (1)
    bytes 6-7    u16 dtype (1 = f32)
    bytes 8-15   u64 rows
    bytes 16-23  u64 cols
    bytes 24-    rows * cols f32, row-major
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import __version__
from .geometry import EmbeddingMatrix, normalize_rows

MAGIC = b"EMB1"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHHQQ")
SCHEMA = "report_v1"


class FormatError(ValueError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class TrailingBytes(FormatError):
    pass


class NonFiniteValue(FormatError):
    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite value at row {row}, column {col}")
        self.row = row
        self.col = col


class CsvShapeMismatch(FormatError):
    pass


def _first_non_finite(a: np.ndarray):
    bad = np.argwhere(~np.isfinite(a))
    if bad.size:
        raise NonFiniteValue(int(bad[0, 0]), int(bad[0, 1]))


def encode_emb1(m) -> bytes:
    a = np.asarray(m.data if isinstance(m, EmbeddingMatrix) else m)
    if a.ndim != 2:
        raise FormatError("only 2-D matrices can be written")
    f32 = np.ascontiguousarray(a, dtype="<f4")
    _first_non_finite(f32)
    return _HEADER.pack(MAGIC, VERSION, DTYPE_F32, a.shape[0], a.shape[1]) + f32.tobytes()


def decode_emb1(buf: bytes) -> np.ndarray:
    """Raw ``float64`` matrix from EMB1 bytes (no unit-norm check)."""
    if len(buf) < _HEADER.size:
        if not buf.startswith(MAGIC[: len(buf)]):
            raise BadMagic("not an EMB1 file")
        raise TruncatedPayload(f"header needs {_HEADER.size} bytes, file has {len(buf)}")
    magic, version, dtype, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {magic!r}")
    if version != VERSION or dtype != DTYPE_F32:
        raise UnsupportedVersion(f"version {version} dtype {dtype} not supported")
    if rows < 1 or cols < 2:
        raise FormatError(f"invalid shape {rows} x {cols}")
    need = rows * cols * 4
    have = len(buf) - _HEADER.size
    if have < need:
        raise TruncatedPayload(f"payload has {have} bytes, expected {need}")
    if have > need:
        raise TrailingBytes(f"payload has {have - need} bytes past the matrix")
    a = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=_HEADER.size).reshape(rows, cols)
    _first_non_finite(a)
    return a.astype(np.float64)


def read_csv_matrix(path, header: bool = False) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader):
            if header and lineno == 0:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            r = len(rows)
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise CsvShapeMismatch(f"row {r} has {len(rec)} fields, expected {width}")
            vals = []
            for c, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise FormatError(f"row {r}, column {c}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise NonFiniteValue(r, c)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise CsvShapeMismatch("no data rows")
    return np.array(rows, dtype=np.float64)


def write_csv_matrix(path, m, header: bool = False) -> None:
    a = np.asarray(m.data if isinstance(m, EmbeddingMatrix) else m, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"d{j}" for j in range(a.shape[1])])
        for row in a:
            w.writerow([repr(float(v)) for v in row])


def infer_format(path) -> str:
    return "csv" if str(path).lower().endswith((".csv", ".txt")) else "emb1"


@dataclass(frozen=True)
class LoadedEmbeddings:
    matrix: EmbeddingMatrix
    max_norm_deviation: float
    normalized: bool


def read_embeddings(path, fmt=None, normalize: bool = False, header: bool = False) -> LoadedEmbeddings:
    """Load and validate an embedding matrix.

    Rows must already be unit norm (to ``1e-6``) unless ``normalize`` is set.
    The largest row-norm deviation seen in the file is reported either way.
    """
    fmt = fmt or infer_format(path)
    if fmt == "emb1":
        with open(path, "rb") as fh:
            raw = decode_emb1(fh.read())
    elif fmt == "csv":
        raw = read_csv_matrix(path, header=header)
    else:
        raise FormatError(f"unknown format {fmt!r}")
    dev = float(np.abs(np.linalg.norm(raw, axis=1) - 1.0).max())
    m = normalize_rows(raw) if normalize else EmbeddingMatrix(raw)
    return LoadedEmbeddings(m, dev, normalize)


def write_embeddings(path, m, fmt=None, header: bool = False) -> None:
    fmt = fmt or infer_format(path)
    if fmt == "emb1":
        with open(path, "wb") as fh:
            fh.write(encode_emb1(m))
    elif fmt == "csv":
        write_csv_matrix(path, m, header=header)
    else:
        raise FormatError(f"unknown format {fmt!r}")


def read_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise FormatError(f"line {lineno + 1}: not an integer label: {s!r}") from None
    return np.array(out, dtype=np.int64)


def write_histogram_csv(path, edges, counts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


# ---------------------------------------------------------------------------
# Report envelope


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and dataclass-like reports."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def make_envelope(command: str, params: dict, body, started=None, deterministic: bool = False) -> dict:
    timestamps = None
    if not deterministic:
        timestamps = {"started": started or _now(), "finished": _now()}
    return {
        "schema": SCHEMA,
        "tool_version": __version__,
        "command": command,
        "params": to_jsonable(params),
        "timestamps": timestamps,
        "body": to_jsonable(body),
    }


def dumps_envelope(env: dict) -> str:
    # NaN marks undefined quantities (e.g. an angle between vanishing means).
    return json.dumps(env, indent=2, sort_keys=True, allow_nan=True) + "\n"


def loads_envelope(text: str) -> dict:
    env = json.loads(text)
    if env.get("schema") != SCHEMA:
        raise FormatError(f"unknown report schema {env.get('schema')!r}")
    return env


def write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


__all__ = [
    "BadMagic",
    "CsvShapeMismatch",
    "FormatError",
    "LoadedEmbeddings",
    "NonFiniteValue",
    "SCHEMA",
    "TrailingBytes",
    "TruncatedPayload",
    "UnsupportedVersion",
    "decode_emb1",
    "dumps_envelope",
    "encode_emb1",
    "infer_format",
    "loads_envelope",
    "make_envelope",
    "read_csv_matrix",
    "read_embeddings",
    "read_labels",
    "to_jsonable",
    "write_csv_matrix",
    "write_embeddings",
    "write_histogram_csv",
    "write_text",
]
