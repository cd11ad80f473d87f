"""Binary trace file I/O.

Layout (all little-endian):
  magic "WKT1" | version u32 | n_heads u32 | d u32 | n_prefill u64 | n_decode u64
  per head: prefill K then V, row-major float32 [n_prefill x d]
  per decode step, per head: q, new_k, new_v (d float32 each)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import TraceFormatError

MAGIC = b"WKT1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")


@dataclass
class TraceFile:
    d: int
    prefill_keys: np.ndarray     # (n_heads, n_prefill, d) float32
    prefill_values: np.ndarray   # (n_heads, n_prefill, d)
    queries: np.ndarray          # (n_decode, n_heads, d)
    new_keys: np.ndarray         # (n_decode, n_heads, d)
    new_values: np.ndarray       # (n_decode, n_heads, d)

    @property
    def n_heads(self) -> int:
        return self.prefill_keys.shape[0]

    @property
    def n_prefill(self) -> int:
        return self.prefill_keys.shape[1]

    @property
    def n_decode(self) -> int:
        return self.queries.shape[0]

    def validate(self):
        h, n, d = self.prefill_keys.shape
        if d != self.d or d == 0:
            raise TraceFormatError(f"dimension mismatch: d={self.d}, keys shape {self.prefill_keys.shape}")
        if self.prefill_values.shape != (h, n, d):
            raise TraceFormatError("prefill K/V shapes differ")
        steps = self.queries.shape[0]
        for name in ("queries", "new_keys", "new_values"):
            arr = getattr(self, name)
            if arr.shape != (steps, h, d):
                raise TraceFormatError(f"{name} has shape {arr.shape}, expected {(steps, h, d)}")
        return self


def write_trace(path, trace: TraceFile):
    trace.validate()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, trace.n_heads, trace.d,
                             trace.n_prefill, trace.n_decode))
        for h in range(trace.n_heads):
            f.write(np.ascontiguousarray(trace.prefill_keys[h], dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(trace.prefill_values[h], dtype="<f4").tobytes())
        for t in range(trace.n_decode):
            for h in range(trace.n_heads):
                for arr in (trace.queries, trace.new_keys, trace.new_values):
                    f.write(np.ascontiguousarray(arr[t, h], dtype="<f4").tobytes())


def read_trace(path) -> TraceFile:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise TraceFormatError(
            f"file too short for header: {len(raw)} < {_HEADER.size} bytes", offset=len(raw))
    magic, version, n_heads, d, n_prefill, n_decode = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise TraceFormatError(f"unsupported version {version}", offset=4)
    if d == 0:
        raise TraceFormatError("d must be positive", offset=12)
    if n_heads == 0:
        raise TraceFormatError("n_heads must be positive", offset=8)
    prefill_floats = 2 * n_heads * n_prefill * d
    decode_floats = 3 * n_decode * n_heads * d
    expected = _HEADER.size + 4 * (prefill_floats + decode_floats)
    if len(raw) != expected:
        raise TraceFormatError(
            f"body length mismatch: expected {expected} bytes, got {len(raw)}",
            offset=min(len(raw), expected))
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    pre = body[:prefill_floats].reshape(n_heads, 2, n_prefill, d)
    dec = body[prefill_floats:].reshape(n_decode, n_heads, 3, d)
    return TraceFile(
        d=d,
        prefill_keys=np.ascontiguousarray(pre[:, 0]),
        prefill_values=np.ascontiguousarray(pre[:, 1]),
        queries=np.ascontiguousarray(dec[:, :, 0]),
        new_keys=np.ascontiguousarray(dec[:, :, 1]),
        new_values=np.ascontiguousarray(dec[:, :, 2]),
    ).validate()
