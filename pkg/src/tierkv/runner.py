"""Trace replay: drive one engine per head and collect a JSON-ready report.

Everything in the report is deterministic for a fixed trace/config/seed
except the single "timestamp" field, which carries wall-clock data
(generation time, build and run durations).
"""

from __future__ import annotations

import datetime
import time

import numpy as np

from .config import EngineConfig
from .engine import HeadEngine
from .tracefile import TraceFile

SCHEMA_VERSION = 1


def _percentile(values, p):
    if not values:
        return None
    return float(np.percentile(np.array(values, dtype=np.float64), p))


def run_trace(trace: TraceFile, cfg: EngineConfig, with_oracle: bool = False):
    """Replay a trace; returns (report dict, approx outputs, oracle outputs).

    Output arrays have shape (n_decode, n_heads, d); oracle outputs are None
    unless with_oracle is set.
    """
    cfg.validate()
    t0 = time.perf_counter()
    engines = []
    for h in range(trace.n_heads):
        engine = HeadEngine(cfg, head=h)
        engine.prefill(trace.prefill_keys[h], trace.prefill_values[h])
        engines.append(engine)
    build_seconds = time.perf_counter() - t0

    outputs = np.zeros((trace.n_decode, trace.n_heads, trace.d))
    oracle_outputs = np.zeros_like(outputs) if with_oracle else None
    per_head_steps = [
        {name: [] for name in ("recall", "rel_error", "hits", "misses",
                               "bytes_slow_to_fast", "bytes_fast_internal",
                               "denominator_coverage", "m", "r", "e")}
        for _ in engines
    ]
    t1 = time.perf_counter()
    for t in range(trace.n_decode):
        for h, engine in enumerate(engines):
            out, sm = engine.decode_step(
                trace.queries[t, h], trace.new_keys[t, h], trace.new_values[t, h],
                with_oracle=with_oracle)
            outputs[t, h] = out
            if with_oracle:
                oracle_outputs[t, h] = engine.oracle_step_output(trace.queries[t, h])
            steps = per_head_steps[h]
            steps["recall"].append(sm.recall)
            steps["rel_error"].append(sm.rel_error)
            steps["hits"].append(sm.hits)
            steps["misses"].append(sm.misses)
            steps["bytes_slow_to_fast"].append(sm.bytes_slow_to_fast)
            steps["bytes_fast_internal"].append(sm.bytes_fast_internal)
            steps["denominator_coverage"].append(sm.denominator_coverage)
            steps["m"].append(sm.m)
            steps["r"].append(sm.r)
            steps["e"].append(sm.e)
    run_seconds = time.perf_counter() - t1

    per_head = []
    for h, engine in enumerate(engines):
        totals = engine.cache.stats()
        totals["bytes_offloaded"] = engine.store.bytes_written_total
        totals["slow_blocks"] = engine.store.n_blocks
        totals["clusters"] = engine.index.m
        per_head.append({"head": h, "steps": per_head_steps[h], "totals": totals})

    recalls = [x for steps in per_head_steps for x in steps["recall"]]
    errors = [x for steps in per_head_steps for x in steps["rel_error"] if x is not None]
    hits = sum(p["totals"]["hits"] for p in per_head)
    misses = sum(p["totals"]["misses"] for p in per_head)
    report = {
        "schema_version": SCHEMA_VERSION,
        "timestamp": {
            "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "build_seconds": build_seconds,
            "run_seconds": run_seconds,
        },
        "config": cfg.to_dict(),
        "trace": {
            "n_heads": trace.n_heads, "d": trace.d,
            "n_prefill": trace.n_prefill, "n_decode": trace.n_decode,
        },
        "per_head": per_head,
        "aggregates": {
            "mean_recall": float(np.mean(recalls)) if recalls else None,
            "mean_rel_error": float(np.mean(errors)) if errors else None,
            "p50_rel_error": _percentile(errors, 50),
            "p90_rel_error": _percentile(errors, 90),
            "p99_rel_error": _percentile(errors, 99),
            "cumulative_hit_ratio": hits / (hits + misses) if hits + misses else 0.0,
            "total_bytes_slow_to_fast": sum(p["totals"]["bytes_slow_to_fast"] for p in per_head),
            "total_bytes_fast_internal": sum(p["totals"]["bytes_fast_internal"] for p in per_head),
            "total_bytes_offloaded": sum(p["totals"]["bytes_offloaded"] for p in per_head),
        },
    }
    return report, outputs, oracle_outputs


def oracle_trace(trace: TraceFile) -> np.ndarray:
    """Exact attention outputs for every decode step and head."""
    from .attention import oracle_attention

    outputs = np.zeros((trace.n_decode, trace.n_heads, trace.d))
    for h in range(trace.n_heads):
        keys = [np.asarray(trace.prefill_keys[h], dtype=np.float32)]
        values = [np.asarray(trace.prefill_values[h], dtype=np.float32)]
        for t in range(trace.n_decode):
            keys.append(trace.new_keys[t, h : h + 1])
            values.append(trace.new_values[t, h : h + 1])
            outputs[t, h] = oracle_attention(
                trace.queries[t, h], np.concatenate(keys), np.concatenate(values))
    return outputs
