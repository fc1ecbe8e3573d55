"""Hardware configuration: per-component area/power rows, timing, and the
line-oriented ``key = value`` file format with one section per component."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .digitaldie import MauSpec
from .photonic import AdcSpec, DptcSpec, PdacSpec


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


# section -> (scope, breakdown group, extra params with defaults)
# area (mm^2) and power (mW) are whole-row figures for ``count`` units.
COMPONENTS = {
    "shared_pdac": ("shared", "pdac", {"bits": 4}),
    "shared_sram": ("shared", "memory", {"capacity": 2 * 1024 * 1024}),
    "pdac": ("photonic", "pdac", {"bits": 4}),
    "adc": ("photonic", "adc", {"bits": 4, "lsb": 1.0}),
    "dptc": ("photonic", "dptc", {"rows": 64, "cols": 64, "noise_sigma": 0.0}),
    "local_sram": ("photonic", "memory", {"capacity": 32 * 1024}),
    "coord_register": ("photonic", "memory", {"capacity": 8 * 1024, "entry_size": 4}),
    "accumulator": ("photonic", "other", {}),
    "comparator": ("photonic", "other", {}),
    "mau": ("digital", "digital", {"macs_per_cycle": 8}),
    "digital_register": ("digital", "digital", {"capacity": 1024}),
    "softmax": ("digital", "digital", {"lut_size": 512}),
}

# default rows: (area mm^2, power mW, count)
COMPONENT_DEFAULTS = {
    "shared_pdac": (0.0016, 8.0, 1),
    "shared_sram": (3.68, 1230.0, 1),
    "pdac": (0.0748, 520.0, 64),
    "adc": (0.0057, 29.6, 32),
    "dptc": (0.246, 624.0, 1),
    "local_sram": (0.06, 19.0, 1),
    "coord_register": (0.015, 5.23, 1),
    "accumulator": (0.0014, 0.039, 32),
    "comparator": (0.00031, 0.019, 32),
    "mau": (0.014, 8.2, 1),
    "digital_register": (0.002, 0.63, 1),
    "softmax": (0.0072, 1.134, 1),
}

SYSTEM_DEFAULTS = {
    "tiles": 32,
    "hbm_bandwidth": 1e12,
    "idle_power_fraction": 0.1,
    "serialize_transfers": False,
    "double_buffering": True,
}

TIMING_DEFAULTS = {
    "photonic_op_time": 1e-9,
    "adc_conversion_time": 1e-9,
    "digital_cycle_time": 1e-9,
    "pdac_modulation_time": 1e-9,
}

_INT_KEYS = {"count", "bits", "capacity", "entry_size", "rows", "cols", "macs_per_cycle",
             "lut_size", "tiles"}
_BOOL_KEYS = {"serialize_transfers", "double_buffering"}


@dataclass(frozen=True)
class Component:
    name: str
    area: float
    power: float
    count: int
    params: dict = field(default_factory=dict, compare=True, hash=False)

    @property
    def scope(self) -> str:
        return COMPONENTS[self.name][0]

    @property
    def group(self) -> str:
        return COMPONENTS[self.name][1]

    @property
    def present(self) -> bool:
        return self.count > 0

    def __getitem__(self, key):
        return self.params[key]


def _default_components():
    return {name: Component(name, *COMPONENT_DEFAULTS[name], dict(COMPONENTS[name][2]))
            for name in COMPONENTS}


@dataclass(frozen=True, eq=False)
class HardwareConfig:
    components: dict = field(default_factory=_default_components)
    tiles: int = 32
    hbm_bandwidth: float = 1e12
    idle_power_fraction: float = 0.1
    serialize_transfers: bool = False
    double_buffering: bool = True
    photonic_op_time: float = 1e-9
    adc_conversion_time: float = 1e-9
    digital_cycle_time: float = 1e-9
    pdac_modulation_time: float = 1e-9

    def __post_init__(self):
        problems = validate(self)
        if problems:
            raise ConfigError(problems)

    def __getitem__(self, name) -> Component:
        return self.components[name]

    def __eq__(self, other):
        return isinstance(other, HardwareConfig) and self.to_dict() == other.to_dict()

    __hash__ = None

    # functional views -----------------------------------------------------
    @property
    def hybrid(self) -> bool:
        """Comparator + MAU present: OverRes signals take the digital path."""
        return self["comparator"].present

    def adc_spec(self) -> AdcSpec:
        adc = self["adc"]
        return AdcSpec(bits=adc["bits"], lsb=adc["lsb"], count_per_array=max(adc.count, 1),
                       conversion_time=self.adc_conversion_time)

    def dptc_spec(self) -> DptcSpec:
        d = self["dptc"]
        return DptcSpec(n_v=d["rows"], n_h=d["cols"], op_time=self.photonic_op_time,
                        noise_sigma=d["noise_sigma"])

    def pdac_spec(self) -> PdacSpec:
        p = self["pdac"]
        return PdacSpec(bits=p["bits"], modulation_time=self.pdac_modulation_time, count=p.count)

    def mau_spec(self) -> MauSpec:
        return MauSpec(macs_per_cycle=self["mau"]["macs_per_cycle"],
                       cycle_time=self.digital_cycle_time)

    # serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        d = {"system": {k: getattr(self, k) for k in SYSTEM_DEFAULTS},
             "timing": {k: getattr(self, k) for k in TIMING_DEFAULTS}}
        for name, comp in self.components.items():
            d[name] = {"area": comp.area, "power": comp.power, "count": comp.count,
                       **comp.params}
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> HardwareConfig:
        return dataclasses.replace(self, **changes)

    def with_component(self, name, **changes) -> HardwareConfig:
        return self.with_components({name: changes})

    def with_components(self, changes: dict) -> HardwareConfig:
        """Apply ``{component: {field: value}}`` in one validated step."""
        comps = dict(self.components)
        for name, fields in changes.items():
            comp = comps[name]
            params = dict(comp.params)
            top = {}
            for k, v in fields.items():
                if k in ("area", "power", "count"):
                    top[k] = v
                elif k in params:
                    params[k] = v
                else:
                    raise ConfigError(f"unknown key '{k}' for component {name}")
            comps[name] = dataclasses.replace(comp, params=params, **top)
        return self.replace(components=comps)

    def dumps(self) -> str:
        out = []
        for section, values in self.to_dict().items():
            out.append(f"[{section}]")
            for k, v in values.items():
                if isinstance(v, bool):
                    v = "true" if v else "false"
                out.append(f"{k} = {v}")
            out.append("")
        return "\n".join(out)


def validate(hw: HardwareConfig) -> list:
    problems = []
    if hw.tiles < 1:
        problems.append(f"system.tiles must be >= 1, got {hw.tiles}")
    for key in ("hbm_bandwidth", *TIMING_DEFAULTS):
        v = getattr(hw, key)
        if not (math.isfinite(v) and v > 0):
            problems.append(f"{key} must be finite and > 0, got {v}")
    if not 0 <= hw.idle_power_fraction <= 1:
        problems.append("system.idle_power_fraction must lie in [0, 1]")
    if set(hw.components) != set(COMPONENTS):
        problems.append(f"component set mismatch: {sorted(set(hw.components) ^ set(COMPONENTS))}")
        return problems
    for name, comp in hw.components.items():
        for key in ("area", "power", "count"):
            v = getattr(comp, key)
            if not (math.isfinite(v) and v >= 0):
                problems.append(f"{name}.{key} must be non-negative, got {v}")
        for key, v in comp.params.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and not v >= 0:
                problems.append(f"{name}.{key} must be non-negative, got {v}")
        if not comp.present and (comp.area or comp.power):
            problems.append(f"{name}: count 0 but non-zero area/power")
    if problems:
        return problems
    c = hw.components
    d = c["dptc"]
    if d.count != 1:
        problems.append("dptc.count must be 1 (one array per Tile)")
    if d["rows"] < 1 or d["cols"] < 1:
        problems.append("dptc.rows/cols must be >= 1")
    if not c["adc"].present:
        problems.append("adc.count must be >= 1")
    elif c["adc"].count > d["rows"] * d["cols"]:
        problems.append("adc.count exceeds the number of array outputs")
    if c["adc"]["bits"] < 2 or c["adc"]["lsb"] <= 0:
        problems.append("adc.bits must be >= 2 and adc.lsb > 0")
    for name in ("pdac", "shared_pdac"):
        if c[name]["bits"] < 2:
            problems.append(f"{name}.bits must be >= 2")
    if c["comparator"].present and c["comparator"].count != c["adc"].count:
        problems.append("comparator.count must be 0 or equal adc.count")
    if c["comparator"].present and not c["mau"].present:
        problems.append("comparator present but no MAU to recompute flagged signals")
    if c["comparator"].present and not c["coord_register"].present:
        problems.append("comparator present but no coordinate register")
    if c["coord_register"].present and c["coord_register"]["capacity"] < c["coord_register"]["entry_size"]:
        problems.append("coord_register.capacity smaller than one entry")
    if c["mau"].present and c["mau"]["macs_per_cycle"] < 1:
        problems.append("mau.macs_per_cycle must be >= 1")
    if c["softmax"].present and c["softmax"]["lut_size"] != 512:
        problems.append("softmax.lut_size must be 512 (two 256-entry 8-bit tables)")
    shard = d["rows"] * d["cols"]
    if c["local_sram"]["capacity"] < shard:
        problems.append(f"local_sram.capacity {c['local_sram']['capacity']} B cannot hold "
                        f"one {d['rows']}x{d['cols']} shard ({shard} B)")
    if c["shared_sram"]["capacity"] <= 0:
        problems.append("shared_sram.capacity must be > 0")
    return problems


DEFAULT_CONFIG = HardwareConfig()
DEFAULT_CONFIG_PATH = Path(__file__).with_name("data") / "default.cfg"


# ---------------------------------------------------------------------------
# file loading
# ---------------------------------------------------------------------------

def _line_index(text):
    """(section, key) -> line number, for diagnostics."""
    index, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = lineno
        elif s and s[0] not in "#;" and "=" in s:
            index[(section, s.split("=", 1)[0].strip().lower())] = lineno
    return index


def _convert(key, raw):
    if key in _BOOL_KEYS:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if key in _INT_KEYS:
        v = float(raw)
        if not v.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return int(v)
    return float(raw)


def loads_config(text: str, source: str = "<config>") -> HardwareConfig:
    """Parse a config file body; missing keys take the default component rows."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_index(text)
    where = lambda sec, key=None: f"{source}:{lines.get((sec, key), '?')}"  # noqa: E731
    problems = []
    system, timing = dict(SYSTEM_DEFAULTS), dict(TIMING_DEFAULTS)
    comps = _default_components()
    for section in parser.sections():
        if section == "system":
            target = system
        elif section == "timing":
            target = timing
        elif section in COMPONENTS:
            target = None
        else:
            problems.append(f"{where(section)}: unknown section [{section}]")
            continue
        updates = {}
        for key, raw in parser.items(section):
            allowed = (target.keys() if target is not None
                       else {"area", "power", "count", *COMPONENTS[section][2]})
            if key not in allowed:
                problems.append(f"{where(section, key)}: unknown key '{key}' in [{section}]")
                continue
            try:
                value = _convert(key, raw)
            except ValueError as exc:
                problems.append(f"{where(section, key)}: {section}.{key}: {exc}")
                continue
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
                problems.append(f"{where(section, key)}: {section}.{key} must be non-negative, got {raw.strip()}")
                continue
            updates[key] = value
        if target is not None:
            target.update(updates)
        else:
            comp = comps[section]
            params = {**comp.params, **{k: v for k, v in updates.items()
                                        if k not in ("area", "power", "count")}}
            comps[section] = dataclasses.replace(
                comp, params=params,
                **{k: v for k, v in updates.items() if k in ("area", "power", "count")})
    if problems:
        raise ConfigError(problems)
    try:
        return HardwareConfig(components=comps, **system, **timing)
    except ConfigError as exc:
        raise ConfigError([f"{source}: {d}" for d in exc.diagnostics]) from None


def load_config(path=None) -> HardwareConfig:
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return loads_config(text, source=str(path))


def validate_config(path) -> tuple[HardwareConfig, str]:
    """Load, validate and echo the fully resolved configuration."""
    hw = load_config(path)
    return hw, hw.dumps()
