"""Plain CSV storage for matrices and vectors.

One matrix row per line, comma-separated, no header. Values are written with
17 significant digits so that a write-read round trip is exact.
"""

import csv
import hashlib

import numpy as np

__all__ = ["MalformedInput", "read_matrix", "read_vector", "write_matrix", "write_vector",
           "file_sha256", "fmt"]


class MalformedInput(ValueError):
    pass


def fmt(v):
    return format(float(v), ".17g")


def read_matrix(path):
    """Read a dense matrix; errors name the file and the 1-based row."""
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise MalformedInput(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise MalformedInput(f"{path}: row {lineno}: cannot parse {bad!r} as a number") from None
            if not all(np.isfinite(vals)):
                raise MalformedInput(f"{path}: row {lineno}: non-finite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise MalformedInput(
                    f"{path}: row {lineno}: expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise MalformedInput(f"{path}: no data")
    return np.array(rows, dtype=float)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def read_vector(path):
    """Read a vector stored as one column or one row."""
    m = read_matrix(path)
    if m.shape[0] != 1 and m.shape[1] != 1:
        raise MalformedInput(f"{path}: expected a single row or column, got shape {m.shape}")
    return m.ravel()


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in A:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_vector(path, v):
    """Write a vector as one value per line."""
    with open(path, "w", newline="") as fh:
        for x in np.asarray(v, dtype=float).ravel():
            fh.write(fmt(x) + "\n")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
