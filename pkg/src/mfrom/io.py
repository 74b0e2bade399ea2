"""Matrix file formats (CSV and binary) shared by designs and snapshots.

Binary layout: magic ``MFRM``, u32 version, u64 rows, u64 cols, followed by
rows*cols float64 values in column-major order, all little-endian.  The CSV
variant carries a one-line header ``# rows=<n> cols=<m> tag=<fidelity>``.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"MFRM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class DataFormatError(ValueError):
    """Raised when an on-disk matrix file is malformed or truncated."""


def atomic_write(path, data: bytes) -> None:
    """Write bytes to path atomically (temp file in same dir + rename)."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".mfrom-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_matrix_binary(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("expected a 2-D matrix, got ndim=%d" % values.ndim)
    rows, cols = values.shape
    header = _HEADER.pack(MAGIC, VERSION, rows, cols)
    body = np.asfortranarray(values).tobytes(order="F")
    atomic_write(path, header + body)


def load_matrix_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataFormatError(
            "%s: truncated header at byte %d (need %d)" % (path, len(raw), _HEADER.size)
        )
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataFormatError("%s: bad magic %r at byte 0" % (path, magic))
    if version != VERSION:
        raise DataFormatError("%s: unsupported version %d" % (path, version))
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise DataFormatError(
            "%s: truncated data at byte %d (expected %d bytes)" % (path, len(raw), expected)
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return flat.reshape((rows, cols), order="F").copy()


def save_matrix_csv(path, values: np.ndarray, tag: str = "") -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("expected a 2-D matrix, got ndim=%d" % values.ndim)
    rows, cols = values.shape
    lines = ["# rows=%d cols=%d tag=%s" % (rows, cols, tag)]
    for r in range(rows):
        lines.append(",".join("%.17g" % v for v in values[r]))
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_matrix_csv(path) -> tuple[np.ndarray, str]:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise DataFormatError("%s: missing '# rows=... cols=... tag=...' header" % path)
        fields = dict(
            item.split("=", 1) for item in header.lstrip("#").split() if "=" in item
        )
        try:
            rows, cols = int(fields["rows"]), int(fields["cols"])
        except (KeyError, ValueError) as exc:
            raise DataFormatError("%s: bad header %r" % (path, header)) from exc
        tag = fields.get("tag", "")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows == 0 or cols == 0:
        data = np.empty((rows, cols))
    if data.shape != (rows, cols):
        raise DataFormatError(
            "%s: header says %dx%d but data is %dx%d" % (path, rows, cols, *data.shape)
        )
    return data, tag
