"""PFNAVMAT binary matrix container and key=value metadata sidecars.

Container layout: magic bytes ``PFNAVMAT``, u64 rows, u64 cols, then
rows*cols little-endian f64 values in row-major order. Sidecars are UTF-8
``key=value`` lines with LF endings; floats are written with repr so a
load/save round trip is bit-identical.
"""

import numpy as np

from .errors import PfnavError

MAGIC = b"PFNAVMAT"


class ContainerError(PfnavError):
    pass


def save_matrix(path, arr):
    a = np.ascontiguousarray(np.atleast_2d(np.asarray(arr, dtype=np.float64)))
    if a.ndim != 2:
        raise ContainerError(f"expected 2-D array, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint64(a.shape[0]).tobytes())
        fh.write(np.uint64(a.shape[1]).tobytes())
        fh.write(a.astype("<f8").tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ContainerError(f"{path}: bad magic {magic!r}")
        header = np.frombuffer(fh.read(16), dtype="<u8")
        if header.size != 2:
            raise ContainerError(f"{path}: truncated header")
        rows, cols = int(header[0]), int(header[1])
        data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
        if data.size != rows * cols:
            raise ContainerError(f"{path}: truncated payload")
    return data.reshape(rows, cols).copy()


def save_vector(path, vec):
    save_matrix(path, np.asarray(vec, dtype=np.float64).reshape(-1, 1))


def load_vector(path):
    m = load_matrix(path)
    if m.shape[1] != 1:
        raise ContainerError(f"{path}: expected a column vector, got {m.shape}")
    return m[:, 0].copy()


def save_meta(path, meta):
    """Write a metadata sidecar. Keys are sorted for byte-stable output."""
    lines = []
    for key in sorted(meta):
        value = meta[key]
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, (list, tuple, np.ndarray)):
            value = ",".join(repr(float(v)) for v in np.asarray(value).ravel())
        lines.append(f"{key}={value}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_meta(path):
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("=")
            meta[key] = value
    return meta


def save_csv(path, header, rows, fmt="%.15g"):
    """Write CSV with LF endings and 15 significant digit floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt % v for v in row) + "\n")
