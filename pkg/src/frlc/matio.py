"""Matrix and vector file I/O: CSV text and the `.mat` f64le binary format.

Two on-disk representations, switched by file extension everywhere the CLI
accepts a matrix:

* ``*.csv`` (or anything not ``.mat``): one row per line, comma-separated
  decimal numbers, no header. Floats are written with ``repr`` so a compliant
  parser reconstructs the exact same 64-bit value (shortest round-trip form).
* ``*.mat``: a 16-byte header — the 8-byte magic ``FRLCMAT1``, then row and
  column counts as little-endian u32 — followed by the row-major float64
  payload, little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"FRLCMAT1"
_HEADER = struct.Struct("<8sII")


def _format_row(row: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in row)


def save_matrix(path: str | Path, mat: np.ndarray) -> None:
    """Write a 2-D array to `path`, binary if it ends in ``.mat``, else CSV."""
    path = Path(path)
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ParseError(f"expected a 2-D array to write, got shape {mat.shape}")
    if path.suffix == ".mat":
        rows, cols = mat.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, rows, cols))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for row in mat:
                fh.write(_format_row(row))
                fh.write("\n")


def load_matrix(path: str | Path) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix` (or any conforming file).

    Raises:
        ParseError: empty file, ragged rows, non-numeric fields (with the
            1-based line number), bad magic, or truncated binary payload.
    """
    path = Path(path)
    if path.suffix == ".mat":
        return _load_binary(path)
    return _load_csv(path)


def _load_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                row = [float(f) for f in fields]
            except ValueError:
                raise ParseError(f"non-numeric field in {path.name!r}", line_no) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    f"ragged row in {path.name!r}: {len(row)} fields, expected {width}",
                    line_no,
                )
            rows.append(row)
    if not rows:
        raise ParseError(f"empty matrix file {path.name!r}")
    return np.asarray(rows, dtype=np.float64)


def _load_binary(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError(f"{path.name!r} is too short to hold a header")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"{path.name!r} has bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(blob) != expected:
        raise ParseError(
            f"{path.name!r} payload is {len(blob) - _HEADER.size} bytes, "
            f"expected {8 * rows * cols} for {rows}x{cols}"
        )
    if rows == 0 or cols == 0:
        raise ParseError(f"{path.name!r} declares an empty {rows}x{cols} matrix")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64, copy=True)


def save_vector(path: str | Path, vec: np.ndarray) -> None:
    """Write a 1-D array as a single-column matrix file."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ParseError(f"expected a 1-D array to write, got shape {vec.shape}")
    save_matrix(path, vec.reshape(-1, 1))


def load_vector(path: str | Path) -> np.ndarray:
    """Read a vector: a single-column or single-row matrix file, flattened."""
    mat = load_matrix(path)
    if 1 not in mat.shape:
        raise ParseError(
            f"expected a vector (one row or one column) in {Path(path).name!r}, "
            f"got shape {mat.shape[0]}x{mat.shape[1]}"
        )
    return mat.reshape(-1)
