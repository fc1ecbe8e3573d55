"""Photonic die: DDot / DPTC dot products, the low-resolution ADC, the analog
comparator and the per-Tile coordinate register."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import kernels
from .qtensor import QuantizedMatrix, code_limit


class PhotonicError(ValueError):
    pass


@dataclass(frozen=True)
class AdcSpec:
    bits: int = 4
    lsb: float = 1.0
    count_per_array: int = 32
    conversion_time: float = 1e-9

    def __post_init__(self):
        if self.bits < 2:
            raise PhotonicError(f"ADC bits must be >= 2, got {self.bits}")
        if not (self.lsb > 0 and math.isfinite(self.lsb)):
            raise PhotonicError(f"ADC lsb must be finite and > 0, got {self.lsb}")
        if self.count_per_array < 1:
            raise PhotonicError("ADC count per array must be >= 1")

    @property
    def max_code(self) -> int:
        return code_limit(self.bits)

    @property
    def full_scale(self) -> float:
        return self.max_code * self.lsb

    def slots(self, conversions: int) -> int:
        """Conversion slots needed for ``conversions`` samples on this array."""
        return -(-conversions // self.count_per_array)


@dataclass(frozen=True)
class PdacSpec:
    bits: int = 4
    modulation_time: float = 1e-9
    count: int = 64

    def __post_init__(self):
        if self.bits < 2:
            raise PhotonicError(f"PDAC bits must be >= 2, got {self.bits}")


@dataclass(frozen=True)
class DptcSpec:
    n_v: int = 64
    n_h: int = 64
    op_time: float = 1e-9
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n_v < 1 or self.n_h < 1:
            raise PhotonicError("DPTC dimensions must be >= 1")
        if not self.noise_sigma >= 0:
            raise PhotonicError("noise_sigma must be >= 0")

    @property
    def k_slice(self) -> int:
        # one DDot consumes an n_h-long operand slice per operation
        return self.n_h

    @property
    def outputs(self) -> int:
        return self.n_v * self.n_h


class Resolution(enum.Enum):
    LOW = "LowRes"
    OVER = "OverRes"


class Coordinate(NamedTuple):
    row: int
    col: int
    k_slice: int


class ComparatorOutcome(NamedTuple):
    classification: Resolution
    coordinate: Coordinate


@dataclass
class CoordinateRegister:
    """Fixed-capacity coordinate log. A full register spills its whole batch
    to shared SRAM; nothing is ever dropped."""

    capacity_bytes: int = 8192
    entry_size_bytes: int = 4
    entries: list = field(default_factory=list)
    spilled: list = field(default_factory=list)
    spill_count: int = 0
    logged: int = 0
    peak: int = 0

    def __post_init__(self):
        if self.capacity_bytes < self.entry_size_bytes or self.entry_size_bytes < 1:
            raise PhotonicError("register must hold at least one entry")

    @property
    def capacity_entries(self) -> int:
        return self.capacity_bytes // self.entry_size_bytes

    @property
    def occupancy_bytes(self) -> int:
        return len(self.entries) * self.entry_size_bytes

    def _spill(self):
        self.spilled.extend(self.entries)
        self.entries = []
        self.spill_count += 1

    def log(self, coord) -> None:
        if len(self.entries) == self.capacity_entries:
            self._spill()
        self.entries.append(tuple(coord))
        self.logged += 1
        self.peak = max(self.peak, len(self.entries))

    def log_many(self, coords: Iterable) -> int:
        """Log a batch; returns how many entries were spilled doing so.

        Same end state as calling ``log`` once per coordinate.
        """
        batch = coords.tolist() if isinstance(coords, np.ndarray) else list(coords)
        n = len(batch)
        if n == 0:
            return 0
        cap = self.capacity_entries
        pending = self.entries + [tuple(c) for c in batch]
        total = len(pending)
        keep = (total - 1) % cap + 1
        spills = (total - 1) // cap
        if spills:
            self.peak = cap
        self.spilled.extend(pending[:total - keep])
        self.entries = pending[total - keep:]
        self.spill_count += spills
        self.logged += n
        self.peak = max(self.peak, len(self.entries))
        return total - keep

    def drain(self) -> list:
        """Hand every logged coordinate (spilled first) to the memory controller."""
        out = self.spilled + self.entries
        self.spilled, self.entries = [], []
        return out


def spill_cycles(spilled_entries: int) -> int:
    """Extra cycles charged for spilling: one per 32 entries."""
    return -(-spilled_entries // 32)


def count_spills(n_entries: int, capacity_entries: int) -> int:
    """Entries that a fresh register spills while logging ``n_entries``.

    Closed form of repeatedly calling ``CoordinateRegister.log``.
    """
    if n_entries <= capacity_entries:
        return 0
    return ((n_entries - 1) // capacity_entries) * capacity_entries


# ---------------------------------------------------------------------------
# optical dot products
# ---------------------------------------------------------------------------

def _codes(v) -> np.ndarray:
    if isinstance(v, QuantizedMatrix):
        return v.codes.astype(np.int64)
    return np.asarray(v, dtype=np.int64)


def ddot(x, y, noise_sigma: float = 0.0, rng: np.random.Generator | None = None,
         n_h: int = 64) -> float:
    """Photocurrent of one DDot unit in integer-product units."""
    xv, yv = _codes(x).ravel(), _codes(y).ravel()
    if xv.size != yv.size:
        raise PhotonicError(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size > n_h:
        raise PhotonicError(f"vector length {xv.size} exceeds DDot length {n_h}")
    value = float(np.dot(xv, yv))
    if noise_sigma > 0:
        if rng is None:
            raise PhotonicError("noisy ddot needs a seeded generator")
        value += float(rng.normal(0.0, noise_sigma))
    return value


def dptc_tile_op(a_tile, b_tile, dptc: DptcSpec = DptcSpec(),
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """One array operation: an n_v x n_h block of DDot outputs.

    Tiles smaller than the array are zero-padded; the returned matrix always
    has the full array shape.
    """
    a, b = _codes(a_tile), _codes(b_tile)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise PhotonicError(f"tile shapes do not chain: {a.shape} x {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    if m > dptc.n_v or n > dptc.n_h or k > dptc.k_slice:
        raise PhotonicError(
            f"tile {m}x{k} @ {k}x{n} exceeds the {dptc.n_v}x{dptc.n_h} array "
            f"(K-depth {dptc.k_slice}); partition first")
    out = np.zeros((dptc.n_v, dptc.n_h), dtype=np.float64)
    out[:m, :n] = kernels.int_gemm(a, b)
    if dptc.noise_sigma > 0:
        if rng is None:
            raise PhotonicError("noisy tile op needs a seeded generator")
        out += rng.normal(0.0, dptc.noise_sigma, out.shape)
    return out


def analog_partials(a: np.ndarray, b: np.ndarray, k_slice: int, noise_sigma: float = 0.0,
                    rng: np.random.Generator | None = None):
    """Exact per-slice partials and what the photodetectors would read.

    Returns ``(exact, analog)``, both shaped ``(slices, M, N)``.
    """
    exact = kernels.slice_partials(a, b, k_slice)
    if noise_sigma > 0:
        if rng is None:
            raise PhotonicError("noisy GEMM needs a seeded generator")
        analog = exact + rng.normal(0.0, noise_sigma, exact.shape)
    else:
        analog = exact.astype(np.float64)
    return exact, analog


# ---------------------------------------------------------------------------
# converters
# ---------------------------------------------------------------------------

def adc_convert(analog: float, adc: AdcSpec = AdcSpec()) -> tuple[int, bool]:
    """Round half away from zero, then clamp to ±max_code."""
    mag = math.floor(abs(analog) / adc.lsb + 0.5)
    saturated = mag > adc.max_code
    mag = min(mag, adc.max_code)
    return (-mag if analog < 0 else mag), saturated


def classify(analog: float, adc: AdcSpec, coord,
             register: CoordinateRegister | None = None) -> ComparatorOutcome:
    coord = Coordinate(*coord)
    if abs(analog) > adc.full_scale:
        if register is not None:
            register.log(coord)
        return ComparatorOutcome(Resolution.OVER, coord)
    return ComparatorOutcome(Resolution.LOW, coord)


def classify_convert(analog: np.ndarray, adc: AdcSpec):
    """Vectorised comparator + ADC. OverRes samples get code 0 and no slot."""
    return kernels.classify_convert(np.ascontiguousarray(analog, dtype=np.float64),
                                    float(adc.lsb), int(adc.max_code))


def saturating_convert(analog: np.ndarray, adc: AdcSpec):
    return kernels.saturating_convert(np.ascontiguousarray(analog, dtype=np.float64),
                                      float(adc.lsb), int(adc.max_code))


# ---------------------------------------------------------------------------
# resolution histogram
# ---------------------------------------------------------------------------

def resolution_histogram(pairs, bits_list, k_slice: int = 64, lsb: float = 1.0) -> dict:
    """Fraction of partial dot products within each ADC's full-scale range.

    ``pairs`` is an iterable of ``(A, B)`` quantized operands (or int arrays);
    every K-slice partial of every ``A @ B`` counts as one signal.
    """
    bits_list = [int(b) for b in bits_list]
    if not bits_list:
        raise PhotonicError("bits_list must not be empty")
    if bits_list != sorted(bits_list):
        raise PhotonicError("bits_list must be ascending")
    thresholds = np.array([code_limit(b) * lsb for b in bits_list], dtype=np.float64)
    counts = np.zeros(len(bits_list), dtype=np.int64)
    total = 0
    for a, b in pairs:
        p = kernels.slice_partials(_codes(a), _codes(b), k_slice)
        counts += kernels.within_counts(p, thresholds)
        total += p.size
    if total == 0:
        raise PhotonicError("empty workload")
    return {b: int(c) / total for b, c in zip(bits_list, counts)}
