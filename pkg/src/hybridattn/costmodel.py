"""Area / power aggregation, trace-driven latency and energy, the single-ADC
baseline and per-area comparison metrics."""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field

from .dataflow import CycleTrace
from .hwconfig import COMPONENTS, HardwareConfig

BREAKDOWN_GROUPS = ("dptc", "memory", "pdac", "adc", "digital", "other")

# components that draw full power for the whole run
STATIC_COMPONENTS = ("shared_sram", "local_sram", "coord_register", "digital_register")

# published reference ratios this model is calibrated against (performance
# per area, energy efficiency per area); printed next to achieved ratios
REFERENCE_RATIOS = {"speedup_per_area": 9.8, "energy_eff_per_area": 2.2}


class CostModelError(ValueError):
    pass


def _instances(hw: HardwareConfig, name: str) -> int:
    return 1 if COMPONENTS[name][0] == "shared" else hw.tiles


@dataclass
class Aggregate:
    total: float
    per_component: dict
    groups: dict
    photonic_die: float
    digital_die: float
    shared: float

    def fractions(self) -> dict:
        if self.total == 0:
            return {g: 0.0 for g in self.groups}
        return {g: v / self.total for g, v in self.groups.items()}

    def component_fractions(self) -> dict:
        if self.total == 0:
            return {c: 0.0 for c in self.per_component}
        return {c: v / self.total for c, v in self.per_component.items()}


def _aggregate(hw: HardwareConfig, attr: str) -> Aggregate:
    per, groups = {}, dict.fromkeys(BREAKDOWN_GROUPS, 0.0)
    sub = {"shared": 0.0, "photonic": 0.0, "digital": 0.0}
    for name, comp in hw.components.items():
        row = getattr(comp, attr)
        sub[comp.scope] += row
        per[name] = row * _instances(hw, name)
        groups[comp.group] += per[name]
    total = hw.tiles * (sub["photonic"] + sub["digital"]) + sub["shared"]
    return Aggregate(total, per, groups, sub["photonic"], sub["digital"], sub["shared"])


def aggregate_area(hw: HardwareConfig) -> Aggregate:
    """Chip area in mm^2."""
    return _aggregate(hw, "area")


def aggregate_power(hw: HardwareConfig) -> Aggregate:
    """Chip power in mW."""
    return _aggregate(hw, "power")


# ---------------------------------------------------------------------------
# latency / energy
# ---------------------------------------------------------------------------

def window_latency(rec, hw: HardwareConfig) -> float:
    photonic = max(hw.photonic_op_time, hw.pdac_modulation_time) if rec.photonic_ops else 0.0
    adc = rec.adc_slots * hw.adc_conversion_time
    digital = (rec.mau_cycles + rec.spill_cycles + rec.softmax_cycles) * hw.digital_cycle_time
    hbm = rec.hbm_bytes / hw.hbm_bandwidth
    if hw.serialize_transfers:
        return max(photonic, adc, hbm) + digital
    return max(photonic, adc, hbm, digital)


def check_trace(trace: CycleTrace, hw: HardwareConfig) -> None:
    d = hw["dptc"]
    outputs = d["rows"] * d["cols"]
    max_slots = -(-outputs // hw["adc"].count)
    for rec in trace.records:
        if rec.photonic_ops > hw.tiles:
            raise CostModelError(f"cycle {rec.cycle}: {rec.photonic_ops} array ops but only {hw.tiles} Tiles")
        if rec.adc_slots > max_slots:
            raise CostModelError(
                f"cycle {rec.cycle}: {rec.adc_slots} ADC slots per array, but {hw['adc'].count} "
                f"ADCs cover {outputs} outputs in {max_slots}")
        if rec.adc_conversions > rec.photonic_ops * outputs:
            raise CostModelError(f"cycle {rec.cycle}: more conversions than array outputs")
        if rec.overres and not hw.hybrid:
            raise CostModelError(f"cycle {rec.cycle}: OverRes signals but no comparator configured")


def component_busy(totals: dict, hw: HardwareConfig) -> dict:
    """Active seconds per component, summed over its instances."""
    op = totals["photonic_ops"]
    return {
        "shared_pdac": totals["pdac_broadcasts"] * hw.pdac_modulation_time,
        "pdac": op * hw.pdac_modulation_time,
        "dptc": op * hw.photonic_op_time,
        "adc": totals["adc_slot_sum"] * hw.adc_conversion_time,
        "comparator": op * hw.photonic_op_time,
        "accumulator": op * hw.photonic_op_time,
        "mau": totals["mau_cycle_sum"] * hw.digital_cycle_time,
        "softmax": totals["softmax_elements"] * hw.digital_cycle_time,
    }


def latency_energy(trace: CycleTrace, hw: HardwareConfig):
    """Returns ``(latency s, energy J, per-component energy J)``."""
    check_trace(trace, hw)
    latency = 0.0
    for rec in trace.records:
        latency += window_latency(rec, hw)
    if not trace.records:
        return 0.0, 0.0, {name: 0.0 for name in hw.components}
    busy = component_busy(trace.totals(), hw)
    frac = hw.idle_power_fraction
    energies = {}
    for name, comp in hw.components.items():
        avail = latency * _instances(hw, name)
        active = avail if name in STATIC_COMPONENTS else min(busy.get(name, 0.0), avail)
        energies[name] = comp.power * 1e-3 * (active + frac * (avail - active))
    return latency, sum(energies.values()), energies


@dataclass
class CostReport:
    total_area: float
    total_power: float
    area_breakdown: dict
    power_breakdown: dict
    latency: float
    energy: float
    energy_breakdown: dict
    ops: float
    throughput: float
    perf_per_area: float
    energy_eff_per_area: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            for k, v in self.to_dict().items():
                if isinstance(v, dict):
                    for kk, vv in sorted(v.items()):
                        w.writerow([f"{k}.{kk}", repr(vv)])
                else:
                    w.writerow([k, repr(v)])


def cost_report(trace: CycleTrace, hw: HardwareConfig, ops: float) -> CostReport:
    """``ops`` is the useful arithmetic count of the workload (2 per MAC)."""
    area, power = aggregate_area(hw), aggregate_power(hw)
    latency, energy, per = latency_energy(trace, hw)
    throughput = ops / latency if latency > 0 else 0.0
    eff = ops / energy if energy > 0 else 0.0
    return CostReport(
        total_area=area.total, total_power=power.total * 1e-3,
        area_breakdown=area.fractions(), power_breakdown=power.fractions(),
        latency=latency, energy=energy, energy_breakdown=per, ops=float(ops),
        throughput=throughput,
        perf_per_area=throughput / area.total if area.total else 0.0,
        energy_eff_per_area=eff / area.total if area.total else 0.0)


def attention_ops(seq_len: int, d_k: int, jobs: int = 1) -> int:
    # Q K^T and P V, 2 ops per MAC each
    return jobs * 4 * seq_len * seq_len * d_k


# ---------------------------------------------------------------------------
# baseline and comparison
# ---------------------------------------------------------------------------

def baseline_ltb(hw: HardwareConfig, adc_bits: int = 8) -> HardwareConfig:
    """One high-resolution ADC per array, no comparator or digital fallback.

    ADC area and power double per extra bit, so one 8-bit unit costs 16
    4-bit units. Everything else photonic is left untouched; the softmax
    unit stays.
    """
    adc = hw["adc"]
    if adc.count < 1:
        raise CostModelError("source config has no ADCs")
    factor = 2 ** (adc_bits - adc["bits"])
    changes = {"adc": dict(count=1, bits=adc_bits, area=adc.area / adc.count * factor,
                           power=adc.power / adc.count * factor)}
    for name in ("comparator", "coord_register", "mau", "digital_register"):
        changes[name] = dict(count=0, area=0.0, power=0.0)
    return hw.with_components(changes)


def compare(hy: CostReport, base: CostReport) -> dict:
    if base.perf_per_area <= 0 or base.energy_eff_per_area <= 0:
        raise CostModelError("baseline metrics must be positive")
    return {"speedup_per_area": hy.perf_per_area / base.perf_per_area,
            "energy_eff_per_area": hy.energy_eff_per_area / base.energy_eff_per_area}
