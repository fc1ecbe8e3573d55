"""Digital die: exact MAU recomputation, the partial-sum accumulator and the
split-table exponential used by the softmax unit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels


class DigitalDieError(ValueError):
    pass


@dataclass(frozen=True)
class MauSpec:
    macs_per_cycle: int = 8
    cycle_time: float = 1e-9
    input_buffer_bytes: int = 512
    output_buffer_bytes: int = 512

    def __post_init__(self):
        if self.macs_per_cycle < 1:
            raise DigitalDieError("macs_per_cycle must be >= 1")

    def cycles(self, slice_length: int) -> int:
        return -(-int(slice_length) // self.macs_per_cycle)


class RecomputeTask(NamedTuple):
    row: int
    col: int
    k_slice: int


def mau_recompute(task: RecomputeTask, a_slice, b_slice, flagged=None,
                  mau: MauSpec = MauSpec()) -> tuple[int, int]:
    """Exact partial sum for one flagged coordinate.

    ``flagged`` is the set of coordinates the comparator logged; recomputing
    anything else means the scheduler routed the wrong work. Returns
    ``(partial, digital_cycles)``.
    """
    task = RecomputeTask(*task)
    if flagged is not None and task not in flagged:
        raise DigitalDieError(f"coordinate {tuple(task)} was never flagged OverRes")
    x = np.asarray(a_slice, dtype=np.int64).ravel()
    y = np.asarray(b_slice, dtype=np.int64).ravel()
    if x.size != y.size:
        raise DigitalDieError(f"slice lengths differ: {x.size} vs {y.size}")
    return int(np.dot(x, y)), mau.cycles(x.size)


def mau_recompute_batch(a: np.ndarray, b: np.ndarray, slices, rows, cols, k_slice: int):
    """Vectorised ``mau_recompute`` over many coordinates (exact int64)."""
    return kernels.mau_batch(a, b, np.asarray(slices, dtype=np.int64),
                             np.asarray(rows, dtype=np.int64),
                             np.asarray(cols, dtype=np.int64), int(k_slice))


def slice_lengths(k: int, k_slice: int) -> np.ndarray:
    ns = kernels.n_slices(k, k_slice)
    lens = np.full(ns, k_slice, dtype=np.int64)
    lens[-1] = k - (ns - 1) * k_slice
    return lens


def accumulate(codes: np.ndarray, over: np.ndarray, lsb: float,
               slices, rows, cols, exact) -> np.ndarray:
    """Sum every K-slice contribution per output, in slice order.

    LowRes slices contribute ``code * lsb``; OverRes slices contribute the
    exact MAU value at the same (slice, row, col).
    """
    slices = np.asarray(slices, dtype=np.int64)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    exact = np.asarray(exact)
    if codes.shape != over.shape:
        raise DigitalDieError("codes and flags disagree in shape")
    n_over = int(over.sum())
    if n_over != rows.size:
        raise DigitalDieError(
            f"{n_over} OverRes partials but {rows.size} exact contributions supplied")
    if rows.size and not over[slices, rows, cols].all():
        raise DigitalDieError("exact contribution supplied for a slice that was not flagged")
    return kernels.accumulate(codes, over, float(lsb), slices, rows, cols,
                              exact.astype(np.float64))


def accumulate_coordinate(contributions: dict, n_slices: int) -> float:
    """Scalar accumulator: ``contributions`` maps slice index to its value."""
    missing = [s for s in range(n_slices) if s not in contributions]
    if missing:
        raise DigitalDieError(f"missing K-slice(s) {missing}")
    total = 0.0
    for s in range(n_slices):
        total += contributions[s]
    return total


# ---------------------------------------------------------------------------
# softmax unit
# ---------------------------------------------------------------------------

ARG_FRAC_BITS = 8
ARG_SCALE = 1 << ARG_FRAC_BITS  # raw units per 1.0
ARG_MIN_RAW = -(1 << 15)
ENTRY_MAX = 255


class SoftmaxLut:
    """exp(x) for x <= 0 as the product of two 256 x 8-bit tables.

    The argument is 16-bit signed fixed point with 8 fractional bits. Its
    magnitude ``m = hi*256 + lo`` gives exp(-m/256) = exp(-hi) * exp(-lo/256);
    ``hi_table[hi]`` and ``lo_table[lo]`` store those factors as 8-bit
    fractions of 255.
    """

    def __init__(self):
        idx = np.arange(256, dtype=np.float64)
        self.hi_codes = np.rint(np.exp(-idx) * ENTRY_MAX).astype(np.uint8)
        self.lo_codes = np.rint(np.exp(-idx / ARG_SCALE) * ENTRY_MAX).astype(np.uint8)
        for t in (self.hi_codes, self.lo_codes):
            t.setflags(write=False)

    @property
    def nbytes(self) -> int:
        return self.hi_codes.nbytes + self.lo_codes.nbytes

    @cached_property
    def hi_table(self) -> np.ndarray:
        return self.hi_codes / ENTRY_MAX

    @cached_property
    def lo_table(self) -> np.ndarray:
        return self.lo_codes / ENTRY_MAX

    def to_raw(self, x) -> np.ndarray:
        """Real arguments to raw fixed point (round half to even)."""
        return np.rint(np.asarray(x, dtype=np.float64) * ARG_SCALE).astype(np.int64)

    def exp_raw(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.int64)
        if np.any(raw > 0):
            raise DigitalDieError("softmax LUT arguments must be <= 0")
        mag = -raw
        flush = raw <= ARG_MIN_RAW
        mag = np.where(flush, 0, mag)
        hi, lo = mag >> ARG_FRAC_BITS, mag & 0xFF
        val = self.hi_table[hi] * self.lo_table[lo]
        return np.where(flush, 0.0, val)

    def __call__(self, x):
        return self.exp_raw(self.to_raw(x))

    def dump_hex(self, path) -> None:
        lines = [f"{v:02x}" for v in self.hi_codes] + [f"{v:02x}" for v in self.lo_codes]
        Path(path).write_text("\n".join(lines) + "\n")


DEFAULT_LUT = SoftmaxLut()


def lut_exp(arg, lut: SoftmaxLut = DEFAULT_LUT):
    """Table exponential of a non-positive argument; scalar in, scalar out."""
    out = lut(arg)
    return float(out) if np.ndim(out) == 0 else out


def softmax_args(scores, scale: float, d_k: int, lut: SoftmaxLut = DEFAULT_LUT) -> np.ndarray:
    """Raw fixed-point arguments ``(s - max s) * scale / sqrt(d_k)``."""
    s = np.asarray(scores, dtype=np.float64)
    if s.shape[-1] == 0:
        raise DigitalDieError("softmax row is empty")
    if d_k <= 0:
        raise DigitalDieError("d_k must be positive")
    shifted = s - s.max(axis=-1, keepdims=True)
    return lut.to_raw(shifted * (scale / math.sqrt(d_k)))


def softmax_rows(scores, scale: float, d_k: int, lut: SoftmaxLut = DEFAULT_LUT) -> np.ndarray:
    """Row-wise softmax with LUT numerators and an exact final division."""
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    num = lut.exp_raw(softmax_args(s, scale, d_k, lut))
    return num / num.sum(axis=-1, keepdims=True)


def softmax_row(scores, scale: float = 1.0, d_k: int = 1,
                lut: SoftmaxLut = DEFAULT_LUT) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise DigitalDieError("softmax row is empty")
    return softmax_rows(s[None, :], scale, d_k, lut)[0]
