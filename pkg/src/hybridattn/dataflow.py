"""Shard partitioning, the broadcast schedule across Tiles, the hybrid GEMM
and the attention pipeline that ties the photonic and digital dies together.

Byte layout used for all traffic accounting:

* operand codes: 1 byte each, row-major, plus an 8-byte scale per matrix;
* GEMM / attention results: 4-byte accumulators, plus an 8-byte scale;
* one flagged signal sent to the digital die: both operand slices (1 byte per
  code) plus its 4-byte coordinate entry.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import photonic
from .digitaldie import DEFAULT_LUT, accumulate, mau_recompute_batch, slice_lengths, softmax_rows
from .hwconfig import HardwareConfig
from .kernels import n_slices
from .qtensor import QuantizedMatrix, QuantSpec, quantize

CODE_BYTES = 1
SCALE_BYTES = 8
RESULT_BYTES = 4
COORD_BYTES = 4


class DataflowError(ValueError):
    pass


def _ceil(a, b):
    return -(-a // b)


def operand_bytes(rows, cols):
    return rows * cols * CODE_BYTES + SCALE_BYTES


def result_bytes(rows, cols):
    return rows * cols * RESULT_BYTES + SCALE_BYTES


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShardGrid:
    shards: np.ndarray  # (grid_rows, grid_cols, n_v, n_h)
    rows: int
    cols: int
    scale: float
    bits: int

    @property
    def grid(self):
        return self.shards.shape[:2]

    def shard(self, i, j) -> np.ndarray:
        return self.shards[i, j]


def partition(m: QuantizedMatrix, n_v: int, n_h: int) -> ShardGrid:
    gr, gc = _ceil(max(m.rows, 1), n_v), _ceil(max(m.cols, 1), n_h)
    padded = np.zeros((gr * n_v, gc * n_h), dtype=m.codes.dtype)
    padded[:m.rows, :m.cols] = m.codes
    shards = padded.reshape(gr, n_v, gc, n_h).transpose(0, 2, 1, 3).copy()
    return ShardGrid(shards, m.rows, m.cols, m.scale, m.bits)


def reassemble(grid: ShardGrid) -> QuantizedMatrix:
    gr, gc, n_v, n_h = grid.shards.shape
    full = grid.shards.transpose(0, 2, 1, 3).reshape(gr * n_v, gc * n_h)
    return QuantizedMatrix(full[:grid.rows, :grid.cols], grid.scale, grid.bits)


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

class ArrayOp(NamedTuple):
    cycle: int
    job: int
    stage: str
    a_shard: tuple  # (m block, k block)
    b_shard: tuple  # (k block, n block)
    tile: int


@dataclass
class GemmPlan:
    """Cycle-by-cycle plan of one GEMM on the Tile array.

    B shards stay in local SRAM; for each K block the Tiles load their share,
    then every A shard of that K block is converted once by the shared PDAC,
    broadcast, and multiplied against each resident B shard in turn.
    """
    stage: str
    job: int
    m: int
    k: int
    n: int
    mb: int
    kb: int
    nb: int
    tile_of: list
    rounds: int
    rounds_per_batch: int
    cycle0: int
    ops: list = field(default_factory=list)
    cycles: int = 0
    broadcasts: int = 0
    b_loads: list = field(default_factory=list)  # (cycle, bytes)
    broadcast_cycles: list = field(default_factory=list)

    @property
    def tiles_used(self) -> int:
        return len(set(self.tile_of))


def assign_tiles(nb: int, tiles: int, policy: str = "round_robin") -> list:
    if policy == "round_robin":
        return [j % tiles for j in range(nb)]
    if policy == "blocked":
        per = _ceil(nb, tiles)
        return [j // per for j in range(nb)]
    raise DataflowError(f"unknown tile assignment policy {policy!r}")


def plan_gemm(m, k, n, hw: HardwareConfig, stage="gemm", job=0, cycle0=0,
              policy="round_robin") -> GemmPlan:
    d = hw["dptc"]
    n_v, n_h = d["rows"], d["cols"]
    ks = n_h
    shard_bytes = ks * n_h * CODE_BYTES
    local = hw["local_sram"]["capacity"]
    if shard_bytes > local:
        raise DataflowError(f"B shard ({shard_bytes} B) larger than local SRAM ({local} B)")
    cap = local // shard_bytes
    if hw.double_buffering and cap >= 2:
        cap //= 2
    mb, kb, nb = _ceil(max(m, 1), n_v), n_slices(k, ks), _ceil(max(n, 1), n_h)
    tile_of = assign_tiles(nb, hw.tiles, policy)
    per_tile = {}
    for j, t in enumerate(tile_of):
        per_tile.setdefault(t, []).append(j)
    rounds = max(len(v) for v in per_tile.values())
    plan = GemmPlan(stage, job, m, k, n, mb, kb, nb, tile_of, rounds, min(rounds, cap), cycle0)
    cyc = cycle0
    for kk in range(kb):
        for r0 in range(0, rounds, plan.rounds_per_batch):
            batch = range(r0, min(r0 + plan.rounds_per_batch, rounds))
            loaded = sum(1 for cols in per_tile.values() for r in batch if r < len(cols))
            plan.b_loads.append((cyc, loaded * shard_bytes))
            for mm in range(mb):
                plan.broadcasts += 1
                plan.broadcast_cycles.append(cyc)
                for r in batch:
                    for t in sorted(per_tile):
                        cols = per_tile[t]
                        if r < len(cols):
                            plan.ops.append(ArrayOp(cyc, job, stage, (mm, kk), (kk, cols[r]), t))
                    cyc += 1
    plan.cycles = cyc - cycle0
    return plan


@dataclass
class TileSchedule:
    plans: list
    tiles_total: int

    @property
    def ops(self):
        return [op for p in self.plans for op in p.ops]

    @property
    def op_count(self) -> int:
        return sum(len(p.ops) for p in self.plans)

    @property
    def cycles(self) -> int:
        return sum(p.cycles for p in self.plans)

    @property
    def broadcasts(self) -> int:
        return sum(p.broadcasts for p in self.plans)


def build_schedule(workload, hw: HardwareConfig, policy="round_robin") -> TileSchedule:
    """Compute-cycle schedule of every attention GEMM in ``workload``."""
    L, dk = workload.seq_len, workload.d_k
    plans, cyc = [], 0
    for job in range(workload.jobs):
        for stage, (m, k, n) in (("gemm1", (L, dk, L)), ("gemm2", (L, L, dk))):
            p = plan_gemm(m, k, n, hw, stage, job, cyc, policy)
            plans.append(p)
            cyc += p.cycles
    return TileSchedule(plans, hw.tiles)


# ---------------------------------------------------------------------------
# hybrid GEMM (functional)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class HybridGemm:
    a: QuantizedMatrix
    b: QuantizedMatrix
    values: np.ndarray  # accumulated output, integer-product units
    codes: np.ndarray  # (S, M, N) ADC codes, 0 where flagged
    over: np.ndarray  # (S, M, N) comparator flags
    flagged: tuple  # (slices, rows, cols)
    exact_flagged: np.ndarray  # MAU results at flagged coordinates
    saturated: int
    k_slice: int
    lsb: float

    @property
    def scale(self) -> float:
        return self.a.scale * self.b.scale

    @property
    def signals(self) -> int:
        return self.over.size

    @property
    def overres(self) -> int:
        return int(self.flagged[0].size)

    def real(self) -> np.ndarray:
        return self.values * self.scale


def hybrid_gemm(a: QuantizedMatrix, b: QuantizedMatrix, hw: HardwareConfig,
                rng: np.random.Generator | None = None) -> HybridGemm:
    if a.cols != b.rows:
        raise DataflowError(f"dimension mismatch: {a.shape} x {b.shape}")
    adc, dptc = hw.adc_spec(), hw.dptc_spec()
    ks = dptc.k_slice
    A, B = a.codes.astype(np.int64), b.codes.astype(np.int64)
    exact, analog = photonic.analog_partials(A, B, ks, dptc.noise_sigma, rng)
    if hw.hybrid:
        codes, over = photonic.classify_convert(analog, adc)
        saturated = 0
    else:
        codes, sat = photonic.saturating_convert(analog, adc)
        over = np.zeros(codes.shape, dtype=bool)
        saturated = int(sat.sum())
    s, r, c = np.nonzero(over)
    exact_vals = mau_recompute_batch(A, B, s, r, c, ks)
    values = accumulate(codes, over, adc.lsb, s, r, c, exact_vals)
    del exact
    return HybridGemm(a, b, values, codes, over, (s, r, c), exact_vals, saturated, ks, adc.lsb)


# ---------------------------------------------------------------------------
# cycle trace
# ---------------------------------------------------------------------------

@dataclass
class CycleRecord:
    cycle: int
    job: int
    stage: str
    photonic_ops: int = 0
    pdac_broadcasts: int = 0
    adc_slots: int = 0
    adc_slot_sum: int = 0
    adc_conversions: int = 0
    overres: int = 0
    digital_tasks: int = 0
    mau_cycles: int = 0
    mau_cycle_sum: int = 0
    spill_entries: int = 0
    spill_cycles: int = 0
    register_peak: int = 0
    softmax_elements: int = 0
    softmax_cycles: int = 0
    hbm_bytes: int = 0
    shared_local_bytes: int = 0
    photonic_digital_bytes: int = 0


TRACE_FIELDS = [f.name for f in dataclasses.fields(CycleRecord)]
_COUNT_FIELDS = TRACE_FIELDS[3:]


@dataclass
class CycleTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def add(self, **kw) -> CycleRecord:
        rec = CycleRecord(cycle=len(self.records), **kw)
        self.records.append(rec)
        return rec

    def totals(self) -> dict:
        out = dict.fromkeys(_COUNT_FIELDS, 0)
        for rec in self.records:
            for k in _COUNT_FIELDS:
                out[k] += getattr(rec, k)
        out["register_peak"] = max((r.register_peak for r in self.records), default=0)
        out["compute_cycles"] = sum(1 for r in self.records if r.photonic_ops)
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for rec in self.records:
                w.writerow(dataclasses.astuple(rec))

    @classmethod
    def from_csv(cls, path) -> CycleTrace:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        recs = []
        for row in rows:
            kw = {k: (row[k] if k == "stage" else int(row[k])) for k in TRACE_FIELDS}
            recs.append(CycleRecord(**kw))
        return cls(recs)


def _block_counts(mask: np.ndarray, n_v: int, n_h: int, mb: int, nb: int) -> np.ndarray:
    """Per array-op counts of ``mask``: (k block, m block, n block)."""
    s, m, n = mask.shape
    padded = np.zeros((s, mb * n_v, nb * n_h), dtype=np.int64)
    padded[:, :m, :n] = mask
    return padded.reshape(s, mb, n_v, nb, n_h).sum(axis=(2, 4))


def trace_gemm(plan: GemmPlan, hg: HybridGemm, hw: HardwareConfig, trace: CycleTrace,
               registers=None) -> None:
    """Append one record per compute cycle of ``plan``."""
    d = hw["dptc"]
    n_v, n_h = d["rows"], d["cols"]
    outputs = n_v * n_h
    adc = hw.adc_spec()
    mau = hw.mau_spec()
    reg = hw["coord_register"]
    reg_cap = reg["capacity"] // reg["entry_size"] if reg.present else 0
    over_counts = _block_counts(hg.over, n_v, n_h, plan.mb, plan.nb)
    lens = slice_lengths(plan.k, hg.k_slice)
    task_cycles = [mau.cycles(x) for x in lens]
    loads = dict(plan.b_loads)
    broadcast_at = set(plan.broadcast_cycles)
    by_cycle = {}
    for op in plan.ops:
        by_cycle.setdefault(op.cycle, []).append(op)
    k_slices_per_b = hg.over.shape[0]
    for cyc in sorted(by_cycle):
        ops = by_cycle[cyc]
        rec = dict(job=plan.job, stage=plan.stage, photonic_ops=len(ops),
                   pdac_broadcasts=int(cyc in broadcast_at),
                   shared_local_bytes=loads.get(cyc, 0))
        slots_max = slot_sum = conv = over_tot = mau_max = mau_sum = 0
        spill = spill_cyc = peak = pd_bytes = 0
        res_bytes = 0
        for op in ops:
            mm, kk = op.a_shard
            nn = op.b_shard[1]
            n_over = int(over_counts[kk, mm, nn])
            converted = outputs - n_over
            slots = adc.slots(converted)
            slots_max = max(slots_max, slots)
            slot_sum += slots
            conv += converted
            over_tot += n_over
            cyc_mau = n_over * task_cycles[kk]
            if reg_cap and n_over:
                if registers is not None:
                    fs, fr, fc = hg.flagged
                    r0, c0 = mm * n_v, nn * n_h
                    sel = ((fs == kk) & (fr >= r0) & (fr < r0 + n_v) & (fc >= c0) & (fc < c0 + n_h))
                    spilled = registers.log_window(op.tile, np.stack([fr[sel], fc[sel], fs[sel]], 1))
                else:
                    spilled = photonic.count_spills(n_over, reg_cap)
                spill += spilled
                sc = photonic.spill_cycles(spilled)
                spill_cyc = max(spill_cyc, sc)
                peak = max(peak, min(n_over, reg_cap))
            mau_max = max(mau_max, cyc_mau)
            mau_sum += cyc_mau
            pd_bytes += n_over * (2 * int(lens[kk]) * 1 + COORD_BYTES)
            if kk == k_slices_per_b - 1:
                vr = min(n_v, plan.m - mm * n_v)
                vc = min(n_h, plan.n - nn * n_h)
                res_bytes += vr * vc * RESULT_BYTES
        rec.update(adc_slots=slots_max, adc_slot_sum=slot_sum, adc_conversions=conv,
                   overres=over_tot, digital_tasks=over_tot, mau_cycles=mau_max,
                   mau_cycle_sum=mau_sum, spill_entries=spill, spill_cycles=spill_cyc,
                   register_peak=peak, photonic_digital_bytes=pd_bytes)
        rec["shared_local_bytes"] += res_bytes
        trace.add(**rec)


class RegisterBank:
    """One coordinate register per Tile, drained after every array op.

    ``drained[tile]`` keeps everything the memory controller received, in
    order, so a run can be replayed against the comparator's flag list.
    """

    def __init__(self, hw: HardwareConfig):
        reg = hw["coord_register"]
        self.registers = [photonic.CoordinateRegister(reg["capacity"], reg["entry_size"])
                          for _ in range(hw.tiles)]
        self.drained = [[] for _ in range(hw.tiles)]

    def log_window(self, tile, coords) -> int:
        r = self.registers[tile]
        spilled = r.log_many(coords)
        self.drained[tile].extend(r.drain())
        return spilled

    @property
    def logged(self) -> int:
        return sum(r.logged for r in self.registers)

    @property
    def spill_count(self) -> int:
        return sum(r.spill_count for r in self.registers)


# ---------------------------------------------------------------------------
# workloads and the attention pipeline
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class AttentionWorkload:
    seq_len: int
    d_k: int
    heads: int = 1
    batch: int = 1
    q: list = field(default_factory=list)
    k: list = field(default_factory=list)
    v: list = field(default_factory=list)
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("seq_len", "d_k", "heads", "batch"):
            if getattr(self, name) < 1:
                raise DataflowError(f"workload {name} must be positive")
        for name in ("q", "k", "v"):
            mats = getattr(self, name)
            if mats and len(mats) != self.jobs:
                raise DataflowError(f"workload needs {self.jobs} {name.upper()} matrices, got {len(mats)}")
            for mat in mats:
                if mat.shape != (self.seq_len, self.d_k):
                    raise DataflowError(
                        f"{name.upper()} shape {mat.shape} != ({self.seq_len}, {self.d_k})")

    @property
    def jobs(self) -> int:
        return self.heads * self.batch

    @property
    def has_operands(self) -> bool:
        return bool(self.q)


@dataclass(eq=False)
class AttentionResult:
    outputs: list  # per job, real (seq_len x d_k)
    scores: list  # per job, hybrid S in integer-product units
    probs: list  # per job, 4-bit re-quantized softmax output
    trace: CycleTrace
    schedule: TileSchedule
    gemms: list  # HybridGemm per (job, stage) when kept
    stats: dict
    registers: list | None = None


def run_gemm(a: QuantizedMatrix, b: QuantizedMatrix, hw: HardwareConfig, seed=0,
             policy="round_robin", track_registers=False):
    """Standalone GEMM through the full load / compute / store pipeline."""
    rng = np.random.default_rng(seed)
    trace = CycleTrace()
    trace.add(job=0, stage="load", hbm_bytes=operand_bytes(*a.shape) + operand_bytes(*b.shape))
    hg = hybrid_gemm(a, b, hw, rng)
    plan = plan_gemm(a.rows, a.cols, b.cols, hw, "gemm", 0, len(trace), policy)
    regs = RegisterBank(hw) if track_registers and hw.hybrid else None
    trace_gemm(plan, hg, hw, trace, regs)
    trace.add(job=0, stage="store", hbm_bytes=result_bytes(a.rows, b.cols))
    return hg, trace, TileSchedule([plan], hw.tiles), regs


def run_attention(workload: AttentionWorkload, hw: HardwareConfig, seed: int = 0,
                  policy: str = "round_robin", keep_gemms: bool = False,
                  track_registers: bool = False, lut=DEFAULT_LUT) -> AttentionResult:
    """softmax(Q K^T / sqrt(d_k)) V for every (batch, head) job.

    Per job: (1) HBM load of Q, K; (2-6) hybrid Q x K^T; (7) LUT softmax and
    4-bit re-quantization of the probabilities; then V is loaded and (2-6)
    repeat for P x V; (8) the output goes back to HBM.
    """
    if not workload.has_operands:
        raise DataflowError("workload has no operands; generate or load them first")
    rng = np.random.default_rng(seed)
    L, dk = workload.seq_len, workload.d_k
    trace = CycleTrace()
    plans, outputs, scores, probs, gemms = [], [], [], [], []
    regs = RegisterBank(hw) if track_registers and hw.hybrid else None
    stats = dict(signals=0, overres=0, mau_tasks=0, exact_contributions=0, saturated=0,
                 p_spills=0)
    shared_cap = hw["shared_sram"]["capacity"]
    softmax_units = hw.tiles if hw["softmax"].present else 0
    for job in range(workload.jobs):
        q, k, v = workload.q[job], workload.k[job], workload.v[job]
        trace.add(job=job, stage="load", hbm_bytes=operand_bytes(L, dk) * 2)
        hg1 = hybrid_gemm(q, k.T, hw, rng)
        p1 = plan_gemm(L, dk, L, hw, "gemm1", job, len(trace), policy)
        trace_gemm(p1, hg1, hw, trace, regs)
        # softmax: one element per cycle per Tile's softmax unit
        prob = softmax_rows(hg1.values, hg1.scale, dk, lut)
        if softmax_units == 0:
            raise DataflowError("configuration has no softmax unit")
        trace.add(job=job, stage="softmax", softmax_elements=L * L,
                  softmax_cycles=_ceil(L * L, softmax_units))
        pq = quantize(prob, QuantSpec(bits=hw["pdac"]["bits"]))
        working = operand_bytes(L, dk) * 3 + operand_bytes(L, L)
        spill = working > shared_cap
        stats["p_spills"] += int(spill)
        hbm_v = operand_bytes(L, dk) + (2 * operand_bytes(L, L) if spill else 0)
        trace.add(job=job, stage="load", hbm_bytes=hbm_v)
        hg2 = hybrid_gemm(pq, v, hw, rng)
        p2 = plan_gemm(L, L, dk, hw, "gemm2", job, len(trace), policy)
        trace_gemm(p2, hg2, hw, trace, regs)
        trace.add(job=job, stage="store", hbm_bytes=result_bytes(L, dk))
        plans += [p1, p2]
        outputs.append(hg2.real())
        scores.append(hg1.values)
        probs.append(pq)
        for hg in (hg1, hg2):
            stats["signals"] += hg.signals
            stats["overres"] += int(hg.over.sum())
            stats["mau_tasks"] += hg.exact_flagged.size
            stats["exact_contributions"] += hg.overres
            stats["saturated"] += hg.saturated
        if keep_gemms:
            gemms += [hg1, hg2]
    return AttentionResult(outputs, scores, probs, trace, TileSchedule(plans, hw.tiles),
                           gemms, stats, regs)


def traffic_account(trace: CycleTrace, hw: HardwareConfig | None = None) -> dict:
    t = trace.totals()
    out = {"hbm_bytes": t["hbm_bytes"],
           "shared_local_bytes": t["shared_local_bytes"],
           "photonic_digital_bytes": t["photonic_digital_bytes"]}
    bw = hw.hbm_bandwidth if hw is not None else 1e12
    out["hbm_time"] = out["hbm_bytes"] / bw
    return out


def attention_reference(q: QuantizedMatrix, k: QuantizedMatrix, v: QuantizedMatrix) -> np.ndarray:
    """Double-precision attention on dequantized operands."""
    Q = q.codes.astype(np.float64) * q.scale
    K = k.codes.astype(np.float64) * k.scale
    V = v.codes.astype(np.float64) * v.scale
    s = Q @ K.T / math.sqrt(q.cols)
    s -= s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return (e / e.sum(axis=1, keepdims=True)) @ V
