"""Synthetic trace generation.

Keys are latent-center + Gaussian noise, with a fresh pool of centers per
positional segment so that nearby positions share coarse structure.  Queries
follow a persistent random walk over the latent centers, which produces the
temporally correlated cluster accesses the block cache is designed for.
Values are i.i.d. standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tracefile import TraceFile


@dataclass
class SynthParams:
    n_prefill: int = 32768
    n_decode: int = 256
    d: int = 64
    heads: int = 4
    clusters_per_segment: int = 32
    intra_cluster_noise: float = 0.25
    query_walk_persistence: float = 0.9
    heavy_tail: float = 0.0      # extra query alignment with its latent center
    segment_size: int = 8192     # positional span sharing one center pool
    seed: int = 0

    def validate(self):
        for name in ("n_prefill", "d", "heads", "clusters_per_segment", "segment_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_decode < 0:
            raise ConfigError(f"n_decode must be non-negative, got {self.n_decode}")
        if not 0.0 <= self.query_walk_persistence <= 1.0:
            raise ConfigError("query_walk_persistence must be in [0,1]")
        if self.intra_cluster_noise < 0 or self.heavy_tail < 0:
            raise ConfigError("noise and heavy_tail must be non-negative")
        return self


def _gen_head(params: SynthParams, rng: np.random.Generator):
    p = params
    n_segments = -(-p.n_prefill // p.segment_size)
    centers = rng.standard_normal((n_segments, p.clusters_per_segment, p.d))

    center_idx = rng.integers(p.clusters_per_segment, size=p.n_prefill)
    seg_idx = np.arange(p.n_prefill) // p.segment_size
    keys = centers[seg_idx, center_idx] + p.intra_cluster_noise * rng.standard_normal(
        (p.n_prefill, p.d))
    values = rng.standard_normal((p.n_prefill, p.d))

    flat_centers = centers.reshape(-1, p.d)
    walk = int(rng.integers(len(flat_centers)))
    queries = np.empty((p.n_decode, p.d))
    new_keys = np.empty((p.n_decode, p.d))
    gain = 1.0 + p.heavy_tail
    for t in range(p.n_decode):
        if rng.random() >= p.query_walk_persistence:
            walk = int(rng.integers(len(flat_centers)))
        queries[t] = gain * flat_centers[walk] + p.intra_cluster_noise * rng.standard_normal(p.d)
        # generated keys keep following the most recent center pool
        new_keys[t] = centers[-1, rng.integers(p.clusters_per_segment)] \
            + p.intra_cluster_noise * rng.standard_normal(p.d)
    new_values = rng.standard_normal((p.n_decode, p.d))
    return keys, values, queries, new_keys, new_values


def gen_trace(params: SynthParams) -> TraceFile:
    params.validate()
    seeds = np.random.SeedSequence(params.seed).spawn(params.heads)
    per_head = [_gen_head(params, np.random.default_rng(s)) for s in seeds]
    f32 = lambda a: np.asarray(a, dtype=np.float32)
    return TraceFile(
        d=params.d,
        prefill_keys=f32([h[0] for h in per_head]),
        prefill_values=f32([h[1] for h in per_head]),
        queries=f32([h[2] for h in per_head]).transpose(1, 0, 2).copy(),
        new_keys=f32([h[3] for h in per_head]).transpose(1, 0, 2).copy(),
        new_values=f32([h[4] for h in per_head]).transpose(1, 0, 2).copy(),
    ).validate()
