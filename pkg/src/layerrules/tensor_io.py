"""NPY v1.0 reading/writing and the dataset container.

Tensors are plain numpy arrays restricted to four little-endian dtypes.
Only the subset of the NPY format needed for datasets is accepted: version
1.0, C order, ``<f4``, ``<f8``, ``<i4``, ``<i8`` (and ``|b1``, widened to
int64 on read).
"""
from __future__ import annotations

import ast
import io
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib import format as npy_format

from .errors import IoFailure, TruncatedFile, UnsupportedFormat, DimensionMismatch

MAGIC = b"\x93NUMPY"
SUPPORTED_DESCR = {"<f4": np.float32, "<f8": np.float64, "<i4": np.int32, "<i8": np.int64}
_WIDENED_DESCR = {"|b1": np.int64}


def _check_dtype(dtype):
    descr = np.dtype(dtype).newbyteorder("<").str
    if descr not in SUPPORTED_DESCR or np.dtype(dtype).byteorder == ">":
        raise UnsupportedFormat(f"unsupported dtype {np.dtype(dtype)!r}")
    return descr


def as_tensor(data, dtype=None) -> np.ndarray:
    """Build a C-ordered tensor of a supported dtype.

    Booleans widen to int64; any other unsupported dtype is rejected rather
    than silently converted.
    """
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.int64)
    _check_dtype(arr.dtype)
    return np.asarray(arr, order="C")


def _parse_header(fh) -> tuple[str, tuple, int]:
    magic = fh.read(6)
    if magic != MAGIC:
        raise UnsupportedFormat("bad magic string")
    version = fh.read(2)
    if len(version) < 2:
        raise TruncatedFile("file ends inside the version field")
    if tuple(version) != (1, 0):
        raise UnsupportedFormat(f"NPY version {version[0]}.{version[1]} not supported")
    raw_len = fh.read(2)
    if len(raw_len) < 2:
        raise TruncatedFile("file ends inside the header length")
    (hlen,) = struct.unpack("<H", raw_len)
    header = fh.read(hlen)
    if len(header) < hlen:
        raise TruncatedFile("file ends inside the header")
    try:
        d = ast.literal_eval(header.decode("latin1"))
    except (SyntaxError, ValueError) as exc:
        raise UnsupportedFormat(f"unparseable header: {exc}") from None
    if not isinstance(d, dict) or set(d) != {"descr", "fortran_order", "shape"}:
        raise UnsupportedFormat("header must hold exactly descr, fortran_order, shape")
    if d["fortran_order"] is not False:
        raise UnsupportedFormat("fortran_order arrays are not supported")
    descr = d["descr"]
    if descr not in SUPPORTED_DESCR and descr not in _WIDENED_DESCR:
        raise UnsupportedFormat(f"unsupported descr {descr!r}")
    shape = d["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise UnsupportedFormat(f"bad shape {shape!r}")
    return descr, shape, 10 + hlen


def read_npy_bytes(buf: bytes) -> np.ndarray:
    return _read(io.BytesIO(buf))


def _read(fh) -> np.ndarray:
    descr, shape, _ = _parse_header(fh)
    src = np.dtype(descr)
    count = int(np.prod(shape, dtype=np.int64))
    nbytes = count * src.itemsize
    payload = fh.read(nbytes)
    if len(payload) < nbytes:
        raise TruncatedFile(f"expected {nbytes} payload bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=src, count=count).reshape(shape)
    if descr in _WIDENED_DESCR:
        arr = arr.astype(_WIDENED_DESCR[descr])
    return arr.copy()


def read_npy(path) -> np.ndarray:
    """Read an NPY v1.0 file into a tensor with the stored dtype and shape."""
    try:
        with open(path, "rb") as fh:
            return _read(fh)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def npy_bytes(t) -> bytes:
    arr = np.asarray(t)
    descr = _check_dtype(arr.dtype)
    arr = np.asarray(arr, dtype=np.dtype(descr), order="C")
    out = io.BytesIO()
    npy_format.write_array_header_1_0(
        out, {"descr": descr, "fortran_order": False, "shape": arr.shape})
    out.write(arr.tobytes(order="C"))
    return out.getvalue()


def write_npy(t, path) -> None:
    """Write ``t`` as NPY v1.0, little-endian, C order, 64-byte aligned preamble."""
    data = npy_bytes(t)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


@dataclass(frozen=True)
class Dataset:
    """Inputs (N x I) with optional per-row labels (N)."""

    inputs: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.inputs)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 0)
        elif x.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        object.__setattr__(self, "inputs", x)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.ndim > 1:
                y = y.reshape(y.shape[0], -1)
                if y.shape[1] != 1:
                    raise DimensionMismatch(f"labels must be one per row, got shape {y.shape}")
                y = y[:, 0]
            if y.shape[0] != x.shape[0]:
                raise DimensionMismatch(
                    f"{y.shape[0]} labels for {x.shape[0]} inputs")
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.inputs.shape[0]

    @classmethod
    def load(cls, x_path, y_path=None) -> "Dataset":
        x = read_npy(x_path)
        y = read_npy(y_path) if y_path is not None else None
        return cls(x, y)


def file_sha256(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


