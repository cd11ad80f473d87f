"""Command-line interface: trace generation, replay, oracle dumps, sweeps."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from .config import EngineConfig
from .errors import ConfigError, TierKVError
from .runner import oracle_trace, run_trace
from .synth import SynthParams, gen_trace
from .tracefile import read_trace, write_trace

SWEEP_AXES = {
    "retrieval_fraction": float,
    "estimation_fraction": float,
    "segment_size": int,
    "cache_fraction": float,
}


def _load_config(path) -> EngineConfig:
    if path is None:
        return EngineConfig().validate()
    with open(path) as f:
        data = json.load(f)
    if "engine" not in data:
        raise ConfigError('config file must contain an "engine" object')
    return EngineConfig.from_dict(data["engine"])


def _load_params(path) -> SynthParams:
    if path is None:
        return SynthParams().validate()
    with open(path) as f:
        data = json.load(f)
    known = {f.name for f in fields(SynthParams)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown trace parameter(s): {sorted(unknown)}")
    return SynthParams(**data).validate()


def _write_report(path, report):
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def cmd_gen_trace(args):
    params = _load_params(args.params)
    write_trace(args.out, gen_trace(params))
    print(f"wrote trace: {args.out}")
    return 0


def cmd_run(args):
    trace = read_trace(args.trace)
    cfg = _load_config(args.config)
    report, _, oracle_outputs = run_trace(trace, cfg, with_oracle=args.with_oracle)
    _write_report(args.report, report)
    if args.oracle_out:
        if oracle_outputs is None:
            raise ConfigError("--oracle-out requires --with-oracle")
        np.savez(args.oracle_out, outputs=oracle_outputs)
    agg = report["aggregates"]
    print(f"wrote report: {args.report} "
          f"(mean recall {agg['mean_recall']}, hit ratio {agg['cumulative_hit_ratio']:.3f})")
    return 0


def cmd_oracle(args):
    trace = read_trace(args.trace)
    np.savez(args.out, outputs=oracle_trace(trace))
    print(f"wrote oracle outputs: {args.out}")
    return 0


def cmd_sweep(args):
    trace = read_trace(args.trace)
    base = _load_config(args.config)
    cast = SWEEP_AXES[args.axis]
    os.makedirs(args.out_dir, exist_ok=True)
    for raw in args.values.split(","):
        value = cast(raw.strip())
        cfg = EngineConfig.from_dict({**base.to_dict(), args.axis: value})
        report, _, _ = run_trace(trace, cfg, with_oracle=args.with_oracle)
        report["sweep"] = {"axis": args.axis, "value": value}
        out = os.path.join(args.out_dir, f"report_{args.axis}_{raw.strip()}.json")
        _write_report(out, report)
        print(f"wrote report: {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tierkv",
        description="Two-tier clustered KV-cache engine harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="generate a synthetic trace")
    p.add_argument("--params", help="JSON file with trace parameters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("run", help="replay a trace through the engine")
    p.add_argument("--trace", required=True)
    p.add_argument("--config", help='JSON file: {"engine": {...}}')
    p.add_argument("--report", required=True)
    p.add_argument("--with-oracle", action="store_true",
                   help="also compute per-step exact attention and error metrics")
    p.add_argument("--oracle-out", help="write exact outputs to this .npz")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="dump exact attention outputs")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="replay a trace across one config axis")
    p.add_argument("--trace", required=True)
    p.add_argument("--config")
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--with-oracle", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TierKVError, OSError, json.JSONDecodeError, ValueError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
