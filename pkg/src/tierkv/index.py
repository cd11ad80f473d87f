"""Clustered vector index over key vectors.

The index partitions the indexable context into positional segments,
clusters each segment independently with spherical k-means, and keeps one
compact record per cluster: the arithmetic-mean centroid of the raw keys,
the elementwise sum of the member values, the member count, and the slow-tier
block ids holding the members.  Ranking centroids against a query plans the
three attention zones for a decode step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import spherical_kmeans
from .config import IndexConfig, round_half_up
from .errors import ConfigError, IntegrityError
from .store import SlowTierStore, TokenKV


@dataclass
class MetaIndexEntry:
    cluster_id: int
    centroid: np.ndarray    # arithmetic mean of raw member keys
    value_sum: np.ndarray   # elementwise sum of member values
    size: int
    block_ids: list[int]
    member_token_ids: list[int] = field(default_factory=list)


@dataclass
class ZonePlan:
    steady_token_ids: list[int]
    retrieval_cluster_ids: list[int]
    estimation_cluster_ids: list[int]
    dropped_cluster_ids: list[int]
    scores: np.ndarray  # q . centroid for every cluster, indexed by cluster_id


def finalize_cluster(members: list[TokenKV], store: SlowTierStore,
                     cluster_id: int) -> MetaIndexEntry:
    """Summarize a cluster and pack its members to the slow tier."""
    if not members:
        raise IntegrityError("finalize_cluster called with no members")
    keys = np.stack([m.key for m in members]).astype(np.float64)
    values = np.stack([m.value for m in members]).astype(np.float64)
    block_ids = store.pack_cluster(members)
    return MetaIndexEntry(
        cluster_id=cluster_id,
        centroid=keys.mean(axis=0),
        value_sum=values.sum(axis=0),
        size=len(members),
        block_ids=block_ids,
        member_token_ids=[m.token_id for m in members],
    )


def rank_clusters(q: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order cluster ids by descending q . centroid, ties to the lower id.

    Returns (order, scores); scores are indexed by cluster_id.
    """
    m = centroids.shape[0]
    if m == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    q = np.asarray(q, dtype=np.float64)
    if q.shape[0] != centroids.shape[1]:
        raise ConfigError(
            f"query dimension {q.shape[0]} does not match centroids {centroids.shape[1]}"
        )
    scores = centroids @ q
    order = np.lexsort((np.arange(m), -scores))
    return order.astype(np.int64), scores


def plan_zones(order: np.ndarray, scores: np.ndarray, cfg: IndexConfig,
               steady_token_ids: list[int]) -> ZonePlan:
    """Split the ranked clusters into retrieval / estimation / dropped zones."""
    m = len(order)
    if m == 0:
        return ZonePlan(list(steady_token_ids), [], [], [], np.empty(0))
    r = min(m, max(1, round_half_up(cfg.retrieval_fraction * m)))
    e = min(m - r, round_half_up(cfg.estimation_fraction * m))
    return ZonePlan(
        steady_token_ids=list(steady_token_ids),
        retrieval_cluster_ids=[int(c) for c in order[:r]],
        estimation_cluster_ids=[int(c) for c in order[r : r + e]],
        dropped_cluster_ids=[int(c) for c in order[r + e :]],
        scores=scores,
    )


class ClusterIndex:
    """Owns the per-head meta index and its incremental updates."""

    def __init__(self, cfg: IndexConfig, store: SlowTierStore):
        self.cfg = cfg
        self.store = store
        self.entries: list[MetaIndexEntry] = []
        self._centroids = np.empty((0, store.d))
        self._value_sums = np.empty((0, store.d))
        self._sizes = np.empty(0, dtype=np.int64)
        self._update_round = 0

    # -- stacked views used on the hot path ---------------------------------

    @property
    def m(self) -> int:
        return len(self.entries)

    @property
    def centroids(self) -> np.ndarray:
        return self._centroids

    @property
    def value_sums(self) -> np.ndarray:
        return self._value_sums

    @property
    def sizes(self) -> np.ndarray:
        return self._sizes

    def _append_entries(self, entries: list[MetaIndexEntry]):
        for entry in entries:
            if entry.cluster_id != len(self.entries):
                raise IntegrityError(
                    f"cluster ids must be dense, got {entry.cluster_id} "
                    f"at position {len(self.entries)}"
                )
            self.entries.append(entry)
        if entries:
            self._centroids = np.vstack([self._centroids] + [e.centroid for e in entries])
            self._value_sums = np.vstack([self._value_sums] + [e.value_sum for e in entries])
            self._sizes = np.concatenate(
                [self._sizes, np.array([e.size for e in entries], dtype=np.int64)]
            )

    # -- construction -------------------------------------------------------

    def _cluster_batch(self, tokens: list[TokenKV], k: int, seed) -> list[MetaIndexEntry]:
        keys = np.stack([t.key for t in tokens])
        assignment = spherical_kmeans(keys, k, self.cfg.kmeans_iters, seed)
        base = len(self.entries)
        entries = []
        for c in range(k):
            members = [tokens[i] for i in np.flatnonzero(assignment == c)]
            entries.append(finalize_cluster(members, self.store, base + len(entries)))
        return entries

    def segmented_build(self, tokens: list[TokenKV]) -> list[MetaIndexEntry]:
        """Cluster the indexable prefill range, one segment at a time.

        An empty range is valid (short prompts defer to the update path).
        """
        new_entries = []
        for seg_idx, start in enumerate(range(0, len(tokens), self.cfg.segment_size)):
            segment = tokens[start : start + self.cfg.segment_size]
            k = math.ceil(len(segment) / self.cfg.centroid_ratio)
            seed = np.random.SeedSequence([self.cfg.rng_seed, 1, seg_idx])
            batch = self._cluster_batch(segment, k, seed)
            self._append_entries(batch)
            new_entries.extend(batch)
        return new_entries

    def update(self, buffer: list[TokenKV]) -> tuple[list[MetaIndexEntry], list[TokenKV]]:
        """Fold full update segments from the decode buffer into the index.

        The newest local_window tokens always stay buffered; clustering fires
        once per update_segment generated tokens.  Returns the new entries
        and the retained buffer tail.
        """
        cfg = self.cfg
        new_entries = []
        while len(buffer) >= cfg.update_segment + cfg.local_window:
            batch_tokens = buffer[: cfg.update_segment]
            buffer = buffer[cfg.update_segment :]
            k = math.ceil(cfg.update_segment / cfg.centroid_ratio)
            seed = np.random.SeedSequence([cfg.rng_seed, 2, self._update_round])
            self._update_round += 1
            batch = self._cluster_batch(batch_tokens, k, seed)
            self._append_entries(batch)
            new_entries.extend(batch)
        return new_entries, buffer

    def rank(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return rank_clusters(q, self._centroids)
