"""Symmetric per-tensor fixed-point matrices and their file formats."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels

QMAT_MAGIC = b"QMAT"
_QMAT_HEADER = struct.Struct("<4sIIB3x")


class QuantizationError(ValueError):
    pass


def code_limit(bits: int) -> int:
    """Largest code magnitude for a symmetric signed ``bits``-wide code."""
    return (1 << (bits - 1)) - 1


@dataclass(frozen=True)
class QuantSpec:
    """Quantizer settings. ``scale=None`` means per-tensor-max scaling."""

    bits: int = 4
    scale: float | None = None

    def __post_init__(self):
        if not 2 <= self.bits <= 16:
            raise QuantizationError(f"bits must lie in [2, 16], got {self.bits}")
        if self.scale is not None and not (math.isfinite(self.scale) and self.scale > 0):
            raise QuantizationError(f"fixed scale must be finite and > 0, got {self.scale}")


@dataclass(frozen=True, eq=False)
class QuantizedMatrix:
    codes: np.ndarray
    scale: float
    bits: int = 4

    def __post_init__(self):
        raw = np.asarray(self.codes)
        if raw.ndim != 2:
            raise QuantizationError(f"codes must be 2-D, got shape {raw.shape}")
        if raw.dtype.kind not in "iub":
            if not np.array_equal(raw, np.rint(raw)):
                raise QuantizationError("codes must be integers")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise QuantizationError(f"scale must be finite and > 0, got {self.scale}")
        if not 2 <= self.bits <= 16:
            raise QuantizationError(f"bits must lie in [2, 16], got {self.bits}")
        lim = code_limit(self.bits)
        if raw.size and np.abs(raw.astype(np.int64)).max() > lim:
            raise QuantizationError(f"codes exceed the symmetric {self.bits}-bit range ±{lim}")
        codes = np.array(raw, dtype=np.int16, copy=True)
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    @property
    def shape(self):
        return self.codes.shape

    @property
    def T(self) -> QuantizedMatrix:
        return QuantizedMatrix(self.codes.T, self.scale, self.bits)

    def __eq__(self, other):
        if not isinstance(other, QuantizedMatrix):
            return NotImplemented
        return (self.bits == other.bits and self.scale == other.scale
                and self.codes.shape == other.codes.shape
                and bool(np.array_equal(self.codes, other.codes)))

    __hash__ = None


class GemmResult(NamedTuple):
    values: np.ndarray  # int64
    scale: float


def check_real(m) -> np.ndarray:
    """Return ``m`` as a 2-D float64 array, rejecting non-finite entries."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise QuantizationError(f"expected a matrix, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        i, j = bad[0]
        raise QuantizationError(f"non-finite value {arr[i, j]!r} at index ({i}, {j})")
    return arr


def quantize(m, spec: QuantSpec = QuantSpec()) -> QuantizedMatrix:
    """Round-to-nearest-even quantization onto the symmetric code range."""
    arr = check_real(m)
    lim = code_limit(spec.bits)
    if spec.scale is not None:
        scale = spec.scale
    else:
        peak = float(np.abs(arr).max()) if arr.size else 0.0
        scale = peak / lim if peak > 0 else 1.0
    codes = np.clip(np.rint(arr / scale), -lim, lim)
    return QuantizedMatrix(codes.astype(np.int16), scale, spec.bits)


def dequantize(q: QuantizedMatrix) -> np.ndarray:
    return q.codes.astype(np.float64) * q.scale


def int_gemm(a: QuantizedMatrix, b: QuantizedMatrix) -> GemmResult:
    """Exact integer product of two quantized matrices.

    int64 accumulation covers 2*bits + ceil(log2 K) for every supported shape
    (16-bit codes would need K > 2**33 to overflow).
    """
    if a.cols != b.rows:
        raise QuantizationError(f"dimension mismatch: {a.shape} x {b.shape}")
    vals = kernels.int_gemm(a.codes.astype(np.int64), b.codes.astype(np.int64))
    return GemmResult(vals, a.scale * b.scale)


def accumulator_bits(bits: int, k: int) -> int:
    return 2 * bits + max(0, math.ceil(math.log2(k))) if k > 0 else 2 * bits


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def qmat_bytes(q: QuantizedMatrix) -> bytes:
    if q.bits > 8:
        raise QuantizationError("QMAT stores 8-bit codes; bits must be <= 8")
    return (_QMAT_HEADER.pack(QMAT_MAGIC, q.rows, q.cols, q.bits)
            + q.codes.astype("<i1").tobytes(order="C")
            + struct.pack("<d", q.scale))


def parse_qmat(buf: bytes, offset: int = 0) -> tuple[QuantizedMatrix, int]:
    """Parse one QMAT record at ``offset``; returns (matrix, next offset)."""
    if len(buf) - offset < _QMAT_HEADER.size:
        raise QuantizationError(f"truncated QMAT header at byte {offset}")
    magic, rows, cols, bits = _QMAT_HEADER.unpack_from(buf, offset)
    if magic != QMAT_MAGIC:
        raise QuantizationError(f"bad QMAT magic {magic!r} at byte {offset}")
    body = offset + _QMAT_HEADER.size
    end = body + rows * cols + 8
    if len(buf) < end:
        raise QuantizationError(
            f"truncated QMAT payload at byte {len(buf)}: need {end - offset} bytes from byte {offset}")
    codes = np.frombuffer(buf, dtype="<i1", count=rows * cols, offset=body).reshape(rows, cols)
    (scale,) = struct.unpack_from("<d", buf, body + rows * cols)
    try:
        q = QuantizedMatrix(codes, scale, bits)
    except QuantizationError as exc:
        raise QuantizationError(f"invalid QMAT record at byte {offset}: {exc}") from None
    return q, end


def write_qmat(path, q: QuantizedMatrix) -> None:
    Path(path).write_bytes(qmat_bytes(q))


def read_qmat(path) -> QuantizedMatrix:
    buf = Path(path).read_bytes()
    q, end = parse_qmat(buf)
    if end != len(buf):
        raise QuantizationError(f"trailing data after QMAT record at byte {end}")
    return q


def load_real_text(path) -> np.ndarray:
    """Whitespace-separated reals, one matrix row per line."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise QuantizationError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise QuantizationError(f"{path}: no data")
    if len({len(r) for r in rows}) != 1:
        raise QuantizationError(f"{path}: ragged rows")
    return check_real(rows)
