"""Per-head orchestration: prefill builds the index and the cache, each
decode step plans zones, assembles the execution buffer, merges exact and
estimated attention, and then applies cache/index updates for the next step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import attention
from .attention import (estimate_partial, exact_partial, merge, merged_sums,
                        oracle_attention, tail_denominator_partial)
from .block_cache import BlockCache
from .config import EngineConfig
from .errors import ConfigError, IntegrityError
from .index import ClusterIndex, ZonePlan, plan_zones
from .metrics import recall_at_k, relative_l2
from .store import SlowTierStore, TokenKV


@dataclass
class StepMetrics:
    step: int
    recall: float
    rel_error: float | None
    hits: int
    misses: int
    bytes_slow_to_fast: int
    bytes_fast_internal: int
    denominator_coverage: float
    log_denominator: float
    m: int
    r: int
    e: int


class HeadEngine:
    """One attention head's state machine: slow store, cluster index,
    block cache, steady zone, and the decode loop."""

    def __init__(self, cfg: EngineConfig, head: int = 0):
        self.cfg = cfg.validate()
        self.head = head
        self.d: int | None = None
        self.store: SlowTierStore | None = None
        self.index: ClusterIndex | None = None
        self.cache: BlockCache | None = None
        self.step = 0
        self.total_tokens = 0
        self.n_sink = 0
        self.buffer: list[TokenKV] = []   # local window + unclustered decode tokens
        self.buffer_start = 0             # token_id of the oldest buffered token
        self._keys = None                 # all keys seen, for metrics/oracle only
        self._values = None

    # -- bookkeeping ---------------------------------------------------------

    def _grow(self, rows):
        n = self.total_tokens
        need = n + len(rows)
        if self._keys is None:
            cap = max(need, 1024)
            self._keys = np.empty((cap, self.d), dtype=np.float32)
            self._values = np.empty((cap, self.d), dtype=np.float32)
        elif need > self._keys.shape[0]:
            cap = max(need, 2 * self._keys.shape[0])
            for name in ("_keys", "_values"):
                old = getattr(self, name)
                new = np.empty((cap, self.d), dtype=np.float32)
                new[:n] = old[:n]
                setattr(self, name, new)

    def _append_tokens(self, keys, values):
        keys = np.atleast_2d(np.asarray(keys, dtype=np.float32))
        self._grow(keys)
        n = self.total_tokens
        self._keys[n : n + len(keys)] = keys
        self._values[n : n + len(keys)] = np.atleast_2d(np.asarray(values, dtype=np.float32))
        self.total_tokens += len(keys)

    def _token(self, token_id: int) -> TokenKV:
        return TokenKV(self._keys[token_id].copy(), self._values[token_id].copy(), token_id)

    def _steady_ids(self) -> list[int]:
        return list(range(self.n_sink)) + list(range(self.buffer_start, self.total_tokens))

    def _steady_arrays(self):
        ids = self._steady_ids()
        k = np.concatenate([self._keys[: self.n_sink],
                            self._keys[self.buffer_start : self.total_tokens]])
        v = np.concatenate([self._values[: self.n_sink],
                            self._values[self.buffer_start : self.total_tokens]])
        return k, v, ids

    def _update_capacity(self):
        want = math.ceil(self.cfg.cache_fraction * self.store.n_blocks)
        if want > self.cache.capacity_blocks:
            self.cache.capacity_blocks = want

    def _register_clusters(self, entries):
        for entry in entries:
            self.cache.register_cluster(entry.cluster_id, entry.block_ids)
        self._update_capacity()

    # -- prefill -------------------------------------------------------------

    def prefill(self, keys: np.ndarray, values: np.ndarray):
        """Offload the prompt KV, build the segmented index, and initialize
        the mapping table and block cache."""
        keys = np.asarray(keys, dtype=np.float32)
        values = np.asarray(values, dtype=np.float32)
        if keys.ndim != 2 or keys.shape != values.shape or keys.shape[0] < 1:
            raise ConfigError(f"bad prefill shapes {keys.shape} / {values.shape}")
        if self.d is not None:
            raise ConfigError("prefill called twice")
        n, self.d = keys.shape
        icfg = self.cfg.index
        self.store = SlowTierStore(self.d, self.cfg.block_size_bytes, head=self.head)
        self.index = ClusterIndex(icfg, self.store)
        self.cache = BlockCache(self.store, capacity_blocks=0)
        self._append_tokens(keys, values)

        self.n_sink = min(icfg.sink_tokens, n)
        index_end = max(self.n_sink, n - icfg.local_window)
        indexable = [self._token(i) for i in range(self.n_sink, index_end)]
        self.buffer_start = index_end
        self.buffer = [self._token(i) for i in range(index_end, n)]

        # sink tokens are offloaded like everything else but stay fast-resident
        if self.n_sink:
            self.store.pack_cluster([self._token(i) for i in range(self.n_sink)])
        entries = self.index.segmented_build(indexable)
        self._register_clusters(entries)
        self._check_accounting()
        return self

    def _check_accounting(self):
        indexed = int(self.index.sizes.sum())
        if indexed + self.n_sink + len(self.buffer) != self.total_tokens:
            raise IntegrityError(
                f"token accounting broken: {indexed} indexed + {self.n_sink} sink "
                f"+ {len(self.buffer)} buffered != {self.total_tokens}"
            )

    # -- decode --------------------------------------------------------------

    def _final_output(self, q, exact, est, plan: ZonePlan):
        cfg = self.cfg
        partials = [exact, est]
        if cfg.index.tail_mode == "denominator_only" and plan.dropped_cluster_ids:
            drop = np.array(plan.dropped_cluster_ids)
            partials.append(tail_denominator_partial(
                q, self.index.centroids[drop], self.index.sizes[drop],
                scores=plan.scores[drop]))
        if cfg.denominator_mode == "merged":
            return merge(partials, exact_partials=[exact])
        # eq2: numerators as merged, but the denominator uses the steady
        # zone's exact terms plus centroid terms for every cluster
        gmax_n, num, _, _ = merged_sums(partials)
        sk, sv, _ = self._steady_arrays()
        steady = exact_partial(q, sk, sv)
        all_ids = np.arange(self.index.m)
        cent_terms = tail_denominator_partial(
            q, self.index.centroids, self.index.sizes, scores=plan.scores[all_ids])
        gmax_d, _, den, _ = merged_sums([steady, cent_terms])
        out = num * np.exp(gmax_n - gmax_d) / den
        steady_den = steady.denominator * np.exp(steady.running_max - gmax_d)
        return attention.AttentionOutput(out, float(steady_den / den) if den > 0 else 0.0,
                                         float(gmax_d + np.log(den)))

    def decode_step(self, q, new_k, new_v, with_oracle: bool = False):
        """Run one decode step; returns (output, StepMetrics)."""
        if self.d is None:
            raise ConfigError("decode_step before prefill")
        q = np.asarray(q, dtype=np.float64)
        step = self.step
        new_id = self.total_tokens
        self._append_tokens(new_k, new_v)
        self.buffer.append(self._token(new_id))

        order, scores = self.index.rank(q)
        plan = plan_zones(order, scores, self.cfg.index, self._steady_ids())
        est_ids = np.array(plan.estimation_cluster_ids, dtype=np.int64)
        est = estimate_partial(
            q, self.index.centroids[est_ids], self.index.value_sums[est_ids],
            self.index.sizes[est_ids], scores=scores[est_ids])

        bytes_s2f_before = self.cache.bytes_slow_to_fast
        bytes_fi_before = self.cache.bytes_fast_internal
        hits_before, misses_before = self.cache.hits, self.cache.misses
        snapshot = self.cache.lookup(plan.retrieval_cluster_ids, step)
        sk, sv, sids = self._steady_arrays()
        buf = self.cache.assemble(plan.retrieval_cluster_ids, snapshot, sk, sv, sids)
        exact = exact_partial(q, buf.keys, buf.values)
        result = self._final_output(q, exact, est, plan)

        retrieved = set(buf.token_ids.tolist())
        n = self.total_tokens
        k = min(self.cfg.metrics_k, n)
        recall = recall_at_k(retrieved, q, self._keys[:n], k)
        rel_error = None
        if with_oracle:
            oracle = oracle_attention(q, self._keys[:n], self._values[:n])
            rel_error = relative_l2(result.output, oracle)

        # barriered: visible to the next step's lookup, not this one
        self.cache.commit_update(plan.retrieval_cluster_ids, snapshot, step)
        new_entries, self.buffer = self.index.update(self.buffer)
        if new_entries:
            self.buffer_start = self.buffer[0].token_id
            self._register_clusters(new_entries)
        self._check_accounting()

        metrics = StepMetrics(
            step=step,
            recall=recall,
            rel_error=rel_error,
            hits=self.cache.hits - hits_before,
            misses=self.cache.misses - misses_before,
            bytes_slow_to_fast=self.cache.bytes_slow_to_fast - bytes_s2f_before,
            bytes_fast_internal=self.cache.bytes_fast_internal - bytes_fi_before,
            denominator_coverage=result.denominator_exact_coverage,
            log_denominator=result.log_denominator,
            m=self.index.m,
            r=len(plan.retrieval_cluster_ids),
            e=len(plan.estimation_cluster_ids),
        )
        self.step += 1
        return result.output, metrics

    def oracle_step_output(self, q) -> np.ndarray:
        """Exact attention over everything seen so far (diagnostics only)."""
        n = self.total_tokens
        return oracle_attention(q, self._keys[:n], self._values[:n])
