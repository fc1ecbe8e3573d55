"""Workload generation / ingestion, experiment orchestration and report files."""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .costmodel import (REFERENCE_RATIOS, attention_ops, baseline_ltb, compare, cost_report)
from .dataflow import (AttentionWorkload, CycleTrace, DataflowError, attention_reference,
                       build_schedule, run_attention, traffic_account)
from .hwconfig import DEFAULT_CONFIG, HardwareConfig, load_config
from .photonic import resolution_histogram
from .qtensor import QuantizationError, QuantSpec, code_limit, load_real_text, parse_qmat, qmat_bytes, quantize

log = logging.getLogger("hybridattn")

LOG_ENV = "HYBRIDATTN_LOG"
MODES = ("fidelity", "histogram", "cost", "compare", "sweep")
KINDS = ("gaussian", "uniform", "heavy_tailed", "file")

WORKLOAD_DEFAULTS = {
    "seq_len": 128, "d_k": 64, "heads": 1, "batch": 1,
    "source": "synthetic", "kind": "gaussian", "sigma": 0.33, "df": 3.0, "seed": 0,
    "q_path": "", "k_path": "", "v_path": "",
}
_WORKLOAD_INT = {"seq_len", "d_k", "heads", "batch", "seed"}
_WORKLOAD_FLOAT = {"sigma", "df"}


class HarnessError(RuntimeError):
    pass


def setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# workloads
# ---------------------------------------------------------------------------

def _draw(rng, kind, shape, sigma, df):
    if kind == "gaussian":
        return rng.normal(0.0, sigma, shape) if sigma > 0 else np.zeros(shape)
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, shape)
    if kind == "heavy_tailed":
        # Student-t: a few large outliers dominate the per-tensor scale
        return sigma * rng.standard_t(df, shape)
    raise HarnessError(f"unknown workload kind {kind!r}")


def gen_workload(kind="gaussian", params=None, seed=0) -> AttentionWorkload:
    """Deterministic attention operands.

    Synthetic kinds draw Q, K, V i.i.d. and quantize each (batch, head)
    matrix with its own per-tensor 4-bit scale; ``file`` reads QMAT records
    (or a plain-text real matrix for single-job workloads).
    """
    p = {**WORKLOAD_DEFAULTS, **(params or {})}
    L, dk, heads, batch = (int(p[k]) for k in ("seq_len", "d_k", "heads", "batch"))
    jobs = heads * batch
    if kind == "file":
        mats = {name: _load_operand(p[f"{name}_path"], jobs) for name in ("q", "k", "v")}
        return AttentionWorkload(L, dk, heads, batch, mats["q"], mats["k"], mats["v"],
                                 source={"kind": "file", **{f"{n}_path": str(p[f"{n}_path"]) for n in "qkv"}})
    if kind not in KINDS:
        raise HarnessError(f"unknown workload kind {kind!r}")
    rng = np.random.default_rng(seed)
    spec = QuantSpec(bits=4)
    ops = {}
    for name in ("q", "k", "v"):
        raw = _draw(rng, kind, (jobs, L, dk), float(p["sigma"]), float(p["df"]))
        ops[name] = [quantize(raw[j], spec) for j in range(jobs)]
    return AttentionWorkload(L, dk, heads, batch, ops["q"], ops["k"], ops["v"],
                             source={"kind": kind, "seed": int(seed), "sigma": float(p["sigma"]),
                                     "df": float(p["df"])})


def _load_operand(path, jobs):
    if not path:
        raise HarnessError("file workload needs q_path, k_path and v_path")
    path = Path(path)
    try:
        if path.suffix == ".txt":
            return [quantize(load_real_text(path))]
        buf = path.read_bytes()
    except OSError as exc:
        raise HarnessError(f"{path}: {exc.strerror}") from None
    except QuantizationError as exc:
        raise HarnessError(str(exc)) from None
    mats, off = [], 0
    try:
        while off < len(buf):
            q, off = parse_qmat(buf, off)
            mats.append(q)
    except QuantizationError as exc:
        raise HarnessError(f"{path}: {exc}") from None
    if len(mats) != jobs:
        raise HarnessError(f"{path}: expected {jobs} QMAT records, found {len(mats)} (byte {off})")
    return mats


def write_workload(w: AttentionWorkload, directory) -> Path:
    """Dump operands as concatenated QMAT files plus a workload spec file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ("q", "k", "v"):
        (d / f"{name}.qmat").write_bytes(b"".join(qmat_bytes(m) for m in getattr(w, name)))
    spec = d / "workload.cfg"
    spec.write_text(
        f"seq_len = {w.seq_len}\nd_k = {w.d_k}\nheads = {w.heads}\nbatch = {w.batch}\n"
        f"source = files\nq_path = q.qmat\nk_path = k.qmat\nv_path = v.qmat\n")
    return spec


def load_workload_spec(path) -> dict:
    """Parse a ``key = value`` workload file into a parameter dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise HarnessError(f"{path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[workload]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise HarnessError(f"{path}: {exc}") from None
    out = dict(WORKLOAD_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;" or "=" not in s:
            continue
        key = s.split("=", 1)[0].strip().lower()
        if key not in WORKLOAD_DEFAULTS:
            raise HarnessError(f"{path}:{lineno}: unknown workload key '{key}'")
    for key, raw in parser.items("workload"):
        try:
            if key in _WORKLOAD_INT:
                out[key] = int(raw)
            elif key in _WORKLOAD_FLOAT:
                out[key] = float(raw)
            else:
                out[key] = raw.strip()
        except ValueError:
            raise HarnessError(f"{path}: bad value for {key}: {raw!r}") from None
    if out["source"] not in ("synthetic", "files"):
        raise HarnessError(f"{path}: source must be 'synthetic' or 'files'")
    for k in ("q_path", "k_path", "v_path"):
        if out[k] and not Path(out[k]).is_absolute():
            out[k] = str(path.parent / out[k])
    return out


def workload_from_spec(params: dict, seed=None) -> AttentionWorkload:
    seed = params["seed"] if seed is None else seed
    if params["source"] == "files":
        return gen_workload("file", params, seed)
    return gen_workload(params["kind"], params, seed)


# ---------------------------------------------------------------------------
# independent reference for the hybrid datapath
# ---------------------------------------------------------------------------

def hybrid_reference(a_codes, b_codes, k_slice, lsb, max_code):
    """Exact partial if it exceeds full scale, else its ADC value; summed
    over K slices in order. Written without the simulator kernels."""
    A = np.asarray(a_codes, dtype=np.int64)
    B = np.asarray(b_codes, dtype=np.int64)
    full_scale = max_code * lsb
    out = np.zeros((A.shape[0], B.shape[1]), dtype=np.float64)
    for lo in range(0, max(A.shape[1], 1), k_slice):
        part = A[:, lo:lo + k_slice] @ B[lo:lo + k_slice, :]
        adc = np.sign(part) * np.floor(np.abs(part) / lsb + 0.5) * lsb
        out += np.where(np.abs(part) > full_scale, part.astype(np.float64), adc)
    return out


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    name: str
    mode: str
    workload: object = None  # path, param dict, or AttentionWorkload
    config: object = None  # path or HardwareConfig
    seed: int = 0
    out_dir: object = None
    bits: tuple = (2, 4, 8)
    tiles: int | None = None
    noise: float | None = None
    serialize_transfers: bool = False
    sweep_axis: str = "seq_len"
    sweep_values: tuple = ()
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise HarnessError(f"mode must be one of {MODES}, got {self.mode!r}")
        for ref in (self.workload, self.config):
            if isinstance(ref, (str, Path)) and not Path(ref).exists():
                raise HarnessError(f"{ref}: no such file")


@dataclass
class SimulationReport:
    mode: str
    metadata: dict
    results: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "metadata": self.metadata,
                           "results": self.results}, indent=2, sort_keys=True) + "\n"

    @property
    def passed(self) -> bool:
        return bool(self.results.get("pass", True))


def resolve_config(spec: ExperimentSpec) -> HardwareConfig:
    cfg = spec.config
    hw = cfg if isinstance(cfg, HardwareConfig) else (load_config(cfg) if cfg else DEFAULT_CONFIG)
    if spec.tiles is not None:
        hw = hw.replace(tiles=int(spec.tiles))
    if spec.noise is not None:
        hw = hw.with_component("dptc", noise_sigma=float(spec.noise))
    if spec.serialize_transfers:
        hw = hw.replace(serialize_transfers=True)
    return hw


def resolve_workload(spec: ExperimentSpec, **overrides) -> AttentionWorkload:
    ref = spec.workload
    if isinstance(ref, AttentionWorkload) and not overrides:
        return ref
    if isinstance(ref, AttentionWorkload):
        ref = {"seq_len": ref.seq_len, "d_k": ref.d_k, "heads": ref.heads, "batch": ref.batch,
               **{k: v for k, v in ref.source.items() if k in WORKLOAD_DEFAULTS}}
    if ref is None:
        params = dict(WORKLOAD_DEFAULTS)
    elif isinstance(ref, dict):
        params = {**WORKLOAD_DEFAULTS, **ref}
    else:
        params = load_workload_spec(ref)
    params.update(overrides)
    return workload_from_spec(params, seed=spec.seed)


def _metadata(spec, hw, w):
    return {"name": spec.name, "config_hash": hw.config_hash(), "seed": spec.seed,
            "version": __version__,
            "workload": {"seq_len": w.seq_len, "d_k": w.d_k, "heads": w.heads,
                         "batch": w.batch, **w.source}}


def _cost(w, hw, seed):
    run = run_attention(w, hw, seed=seed)
    rep = cost_report(run.trace, hw, attention_ops(w.seq_len, w.d_k, w.jobs))
    return run, rep


def _mode_fidelity(spec, hw, w, out):
    run = run_attention(w, hw, seed=spec.seed, keep_gemms=True)
    adc = hw.adc_spec()
    exact_match, max_dev = True, 0.0
    for hg in run.gemms:
        if hw.hybrid:
            ref = hybrid_reference(hg.a.codes, hg.b.codes, hg.k_slice, adc.lsb, adc.max_code)
            exact_match &= bool(np.array_equal(ref, hg.values)) or hw["dptc"]["noise_sigma"] > 0
    for j, o in enumerate(run.outputs):
        ref = attention_reference(w.q[j], w.k[j], w.v[j])
        max_dev = max(max_dev, float(np.abs(o - ref).max()))
    run.trace.to_csv(out / "trace.csv") if out else None
    overres = run.stats["overres"] / run.stats["signals"]
    return {"pass": bool(exact_match), "hybrid_matches_reference": bool(exact_match),
            "max_abs_dev_vs_float_attention": max_dev, "overres_fraction": overres,
            "output_abs_max": float(max(np.abs(o).max() for o in run.outputs)),
            "stats": run.stats}


def _mode_histogram(spec, hw, w, out):
    run = run_attention(w, hw, seed=spec.seed)
    pairs = [(w.q[j], w.k[j].T) for j in range(w.jobs)]
    pairs += [(run.probs[j], w.v[j]) for j in range(w.jobs)]
    lsb = hw["adc"]["lsb"]
    fr = resolution_histogram(pairs, spec.bits, hw["dptc"]["cols"], lsb)
    rows = [{"bits": b, "full_scale": code_limit(b) * lsb, "fraction_within": fr[b],
             "overres_fraction": 1.0 - fr[b]} for b in spec.bits]
    if out:
        with open(out / "histogram.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            wr.writeheader()
            wr.writerows(rows)
    mono = all(rows[i]["fraction_within"] <= rows[i + 1]["fraction_within"] for i in range(len(rows) - 1))
    return {"pass": mono, "monotone": mono, "histogram": rows}


def _mode_cost(spec, hw, w, out):
    run, rep = _cost(w, hw, spec.seed)
    if out:
        run.trace.to_csv(out / "trace.csv")
        rep.to_csv(out / "cost.csv")
    return {"cost": rep.to_dict(), "traffic": traffic_account(run.trace, hw),
            "cycles": len(run.trace), "compute_cycles": run.schedule.cycles,
            "array_ops": run.schedule.op_count}


def _mode_compare(spec, hw, w, out):
    base_hw = baseline_ltb(hw)
    run_h, rep_h = _cost(w, hw, spec.seed)
    run_b, rep_b = _cost(w, base_hw, spec.seed)
    ratios = compare(rep_h, rep_b)
    replay = None
    if out:
        run_h.trace.to_csv(out / "trace.csv")
        run_b.trace.to_csv(out / "trace_baseline.csv")
        rep_h.to_csv(out / "cost.csv")
        rep_b.to_csv(out / "cost_baseline.csv")
        ops = attention_ops(w.seq_len, w.d_k, w.jobs)
        again = compare(cost_report(CycleTrace.from_csv(out / "trace.csv"), hw, ops),
                        cost_report(CycleTrace.from_csv(out / "trace_baseline.csv"), base_hw, ops))
        replay = again == ratios
    slots_h = -(-hw["dptc"]["rows"] * hw["dptc"]["cols"] // hw["adc"].count)
    slots_b = -(-hw["dptc"]["rows"] * hw["dptc"]["cols"] // base_hw["adc"].count)
    return {"ratios": ratios, "reference_ratios": REFERENCE_RATIOS,
            "replay_match": replay, "conversion_slots_per_op": {"hybrid": slots_h, "baseline": slots_b},
            "overres_fraction": run_h.stats["overres"] / run_h.stats["signals"],
            "hybrid": rep_h.to_dict(), "baseline": rep_b.to_dict(),
            "baseline_config_hash": base_hw.config_hash()}


def sweep_point(w: AttentionWorkload, hw: HardwareConfig, seed: int = 0) -> dict:
    run, rep = _cost(w, hw, seed)
    sched = run.schedule
    return {"seq_len": w.seq_len, "tiles": hw.tiles, "latency": rep.latency,
            "energy": rep.energy, "throughput": rep.throughput,
            "perf_per_area": rep.perf_per_area, "energy_eff_per_area": rep.energy_eff_per_area,
            "hbm_bytes": traffic_account(run.trace, hw)["hbm_bytes"],
            "compute_cycles": sched.cycles, "array_ops": sched.op_count,
            "broadcasts": sched.broadcasts,
            "cycles_per_shard": sched.cycles / sched.broadcasts,
            "latency_per_op": rep.latency / sched.op_count}


def sweep(points, workers: int = 1) -> list:
    """Evaluate ``(workload, hw, seed)`` points; results keep input order."""
    points = list(points)
    if not points:
        raise HarnessError("sweep needs at least one point")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: sweep_point(*p), points))
    return [sweep_point(*p) for p in points]


def _mode_sweep(spec, hw, w, out):
    axis, values = spec.sweep_axis, list(spec.sweep_values)
    if not values:
        values = [w.seq_len] if axis == "seq_len" else [hw.tiles]
    if axis == "seq_len":
        points = [(resolve_workload(spec, seq_len=int(v)), hw, spec.seed) for v in values]
    elif axis == "tiles":
        points = [(w, hw.replace(tiles=int(v)), spec.seed) for v in values]
    else:
        raise HarnessError(f"sweep axis must be 'seq_len' or 'tiles', got {axis!r}")
    rows = sweep(points, spec.workers)
    if out:
        with open(out / "sweep.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            wr.writeheader()
            wr.writerows(rows)
    return {"axis": axis, "points": rows}


_MODE_FN = {"fidelity": _mode_fidelity, "histogram": _mode_histogram, "cost": _mode_cost,
            "compare": _mode_compare, "sweep": _mode_sweep}


def run_experiment(spec: ExperimentSpec) -> SimulationReport:
    hw = resolve_config(spec)
    w = resolve_workload(spec)
    out = Path(spec.out_dir) if spec.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    log.info("running %s (%s) seed=%d config=%s", spec.name, spec.mode, spec.seed,
             hw.config_hash()[:12])
    results = _MODE_FN[spec.mode](spec, hw, w, out)
    report = SimulationReport(spec.mode, _metadata(spec, hw, w), _jsonable(results))
    if out:
        (out / "report.json").write_text(report.to_json())
        report.files = {p.name: str(p) for p in sorted(out.iterdir())}
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def schedule_summary(w: AttentionWorkload, hw: HardwareConfig) -> dict:
    s = build_schedule(w, hw)
    return {"array_ops": s.op_count, "cycles": s.cycles, "broadcasts": s.broadcasts}


__all__ = ["ExperimentSpec", "SimulationReport", "gen_workload", "run_experiment",
           "write_workload", "load_workload_spec", "hybrid_reference", "sweep",
           "DataflowError", "HarnessError"]
