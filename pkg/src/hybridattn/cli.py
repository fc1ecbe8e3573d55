"""``simulate`` command line entry point."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import MODES, ExperimentSpec, HarnessError, run_experiment, setup_logging
from .hwconfig import ConfigError, validate_config


def _bits(text):
    try:
        return tuple(int(b) for b in text.split(",") if b.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad bit list {text!r}") from None


def _values(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Hybrid photonic-digital attention simulator.")
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", type=Path, default=None, help="hardware config file (default: built-in)")
        s.add_argument("--workload", type=Path, default=None, help="workload spec file")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", type=Path, required=True, help="output directory")
        s.add_argument("--bits", type=_bits, default=(2, 4, 8))
        s.add_argument("--tiles", type=int, default=None)
        s.add_argument("--noise", type=float, default=None, help="analog noise sigma")
        s.add_argument("--serialize-transfers", action="store_true")
        if mode == "sweep":
            s.add_argument("--axis", choices=("seq_len", "tiles"), default="seq_len")
            s.add_argument("--values", type=_values, default=())
            s.add_argument("--workers", type=int, default=1)
    v = sub.add_parser("validate", help="parse a config file and echo it back")
    v.add_argument("config", type=Path)
    lut = sub.add_parser("lut", help="write the softmax LUT hex dump")
    lut.add_argument("--out", type=Path, required=True)
    return p


def _fail(kind, message, code=2):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "validate":
            _, text = validate_config(args.config)
            sys.stdout.write(text)
            return 0
        if args.mode == "lut":
            from .digitaldie import DEFAULT_LUT
            args.out.mkdir(parents=True, exist_ok=True)
            DEFAULT_LUT.dump_hex(args.out / "softmax_lut.hex")
            return 0
        spec = ExperimentSpec(
            name=args.mode, mode=args.mode, workload=args.workload, config=args.config,
            seed=args.seed, out_dir=args.out, bits=args.bits, tiles=args.tiles,
            noise=args.noise, serialize_transfers=args.serialize_transfers,
            sweep_axis=getattr(args, "axis", "seq_len"),
            sweep_values=getattr(args, "values", ()), workers=getattr(args, "workers", 1))
        report = run_experiment(spec)
    except ConfigError as exc:
        return _fail("config", "; ".join(exc.diagnostics))
    except (HarnessError, ValueError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc))
    print(str(Path(args.out) / "report.json"))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
