"""Functional and analytical simulator of a hybrid photonic-digital attention
accelerator: 4-bit photonic GEMMs with low-resolution ADCs, comparator-driven
digital recomputation of over-range partials, LUT softmax, and a trace-driven
area / power / latency / energy model with a one-ADC-per-array baseline."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .qtensor import QuantizedMatrix, QuantSpec, dequantize, int_gemm, quantize  # noqa: E402
from .hwconfig import DEFAULT_CONFIG, HardwareConfig, load_config  # noqa: E402
from .dataflow import AttentionWorkload, hybrid_gemm, run_attention  # noqa: E402
from .costmodel import aggregate_area, aggregate_power, baseline_ltb, compare, cost_report  # noqa: E402

__all__ = [
    "BACKEND", "QuantizedMatrix", "QuantSpec", "quantize", "dequantize", "int_gemm",
    "HardwareConfig", "DEFAULT_CONFIG", "load_config", "AttentionWorkload", "hybrid_gemm",
    "run_attention", "aggregate_area", "aggregate_power", "baseline_ltb", "compare",
    "cost_report",
]
