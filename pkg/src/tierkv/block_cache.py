"""Fast-tier block cache with a cluster mapping table.

Clusters are the logical access unit (hit/miss, LRU order, admission and
eviction are all cluster-granular, all-or-nothing); fixed-size blocks are
the physical unit.  The read path (lookup + assemble) never mutates the
eviction state; commit_update applies recency updates and admissions after
the step's attention work, and its effects become visible to the next
step's lookup.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError
from .store import SCALAR_BYTES, SlowTierStore


@dataclass
class ClusterDescriptor:
    cluster_id: int
    slow_block_ids: list[int]
    fast_slot_ids: list[int] | None = None  # None means not cached
    last_access_step: int = -1

    @property
    def cached(self) -> bool:
        return self.fast_slot_ids is not None


@dataclass
class ExecutionBuffer:
    """Contiguous per-step staging area: steady tokens, then retrieval
    clusters in rank order.  spans tag each region with its source."""

    keys: np.ndarray
    values: np.ndarray
    token_ids: np.ndarray
    spans: list[tuple] = field(default_factory=list)  # (source, cluster_id, start, end)


def _block_arrays(payload):
    keys = np.stack([t.key for t in payload])
    values = np.stack([t.value for t in payload])
    ids = np.array([t.token_id for t in payload], dtype=np.int64)
    return keys, values, ids


class BlockCache:
    def __init__(self, store: SlowTierStore, capacity_blocks: int):
        self.store = store
        self.capacity_blocks = capacity_blocks
        self.mapping: dict[int, ClusterDescriptor] = {}
        self.slots: dict[int, tuple] = {}  # slot_id -> (keys, values, token_ids)
        self.lru: OrderedDict[int, None] = OrderedDict()  # oldest first
        self.hits = 0
        self.misses = 0
        self.bytes_slow_to_fast = 0
        self.bytes_fast_internal = 0
        self.event_log: list[dict] = []
        self._next_slot_id = 0
        self._free_slots: list[int] = []
        self._staged: dict[int, list[tuple]] = {}  # cid -> per-block arrays from a miss

    def register_cluster(self, cluster_id: int, slow_block_ids: list[int]):
        if cluster_id in self.mapping:
            raise IntegrityError(f"cluster {cluster_id} already registered")
        self.mapping[cluster_id] = ClusterDescriptor(cluster_id, list(slow_block_ids))

    @property
    def occupied_blocks(self) -> int:
        return len(self.slots)

    # -- synchronous read path ----------------------------------------------

    def lookup(self, cluster_ids, step: int) -> dict[int, bool]:
        """Residency snapshot as of the last commit; counts one access per
        cluster per step and leaves the LRU order untouched."""
        seen = []
        for cid in cluster_ids:
            if cid not in self.mapping:
                raise IntegrityError(f"unknown cluster_id {cid}")
            if cid not in seen:
                seen.append(cid)
        snapshot = {cid: self.mapping[cid].cached for cid in seen}
        step_hits = sum(snapshot.values())
        self.hits += step_hits
        self.misses += len(seen) - step_hits
        self.event_log.append({
            "type": "access", "step": step, "clusters": seen,
            "cached": [snapshot[c] for c in seen],
        })
        return snapshot

    def assemble(self, retrieval_cluster_ids, snapshot, steady_keys, steady_values,
                 steady_token_ids) -> ExecutionBuffer:
        """Gather steady tokens plus retrieval clusters into one contiguous
        region.  Missed clusters are read block-wise from the slow tier and
        staged for admission at the next commit."""
        d = self.store.d
        token_bytes = 2 * d * SCALAR_BYTES
        keys_parts, values_parts, id_parts, spans = [], [], [], []
        pos = 0
        n_steady = len(steady_token_ids)
        if n_steady:
            keys_parts.append(np.asarray(steady_keys))
            values_parts.append(np.asarray(steady_values))
            id_parts.append(np.asarray(steady_token_ids, dtype=np.int64))
            spans.append(("steady", None, 0, n_steady))
            self.bytes_fast_internal += n_steady * token_bytes
            pos = n_steady
        for cid in retrieval_cluster_ids:
            desc = self.mapping[cid]
            if snapshot[cid]:
                blocks = [self.slots[s] for s in desc.fast_slot_ids]
                self.bytes_fast_internal += len(desc.fast_slot_ids) * self.store.block_size_bytes
                source = "cache_hit"
            else:
                reads = self.store.read_blocks(desc.slow_block_ids)
                blocks = [_block_arrays(payload) for _, payload in reads]
                self.bytes_slow_to_fast += len(desc.slow_block_ids) * self.store.block_size_bytes
                self._staged[cid] = blocks
                source = "slow_miss"
            n = 0
            for bk, bv, bi in blocks:
                keys_parts.append(bk)
                values_parts.append(bv)
                id_parts.append(bi)
                n += len(bi)
            spans.append((source, cid, pos, pos + n))
            pos += n
        if keys_parts:
            keys = np.concatenate(keys_parts)
            values = np.concatenate(values_parts)
            ids = np.concatenate(id_parts)
        else:
            keys = np.empty((0, d), dtype=np.float32)
            values = np.empty((0, d), dtype=np.float32)
            ids = np.empty(0, dtype=np.int64)
        return ExecutionBuffer(keys, values, ids, spans)

    # -- asynchronous update path -------------------------------------------

    def _alloc_slot(self) -> int:
        if self._free_slots:
            return self._free_slots.pop(0)
        slot = self._next_slot_id
        self._next_slot_id += 1
        return slot

    def _evict(self, cid: int):
        desc = self.mapping[cid]
        for slot in desc.fast_slot_ids:
            del self.slots[slot]
            self._free_slots.append(slot)
        self._free_slots.sort()
        desc.fast_slot_ids = None
        del self.lru[cid]

    def commit_update(self, retrieval_cluster_ids, snapshot, step: int) -> list[dict]:
        """Apply recency updates and admissions for one step's accesses.

        Accessed cached clusters become most-recent.  Missed clusters are
        admitted all-or-nothing in rank order, evicting LRU clusters that
        were not part of this step; when not even that frees enough space,
        or a cluster alone exceeds total capacity, admission is rejected.
        """
        log = []
        touched = set(retrieval_cluster_ids)
        for cid in retrieval_cluster_ids:
            desc = self.mapping[cid]
            desc.last_access_step = step
            if snapshot[cid]:
                self.lru.move_to_end(cid)
        for cid in retrieval_cluster_ids:
            if snapshot[cid]:
                continue
            desc = self.mapping[cid]
            needed = len(desc.slow_block_ids)
            if needed > self.capacity_blocks:
                log.append({"type": "reject", "step": step, "cluster": cid})
                self._staged.pop(cid, None)
                continue
            evictable = [c for c in self.lru if c not in touched]
            while self.capacity_blocks - self.occupied_blocks < needed:
                if not evictable:
                    break
                victim = evictable.pop(0)
                self._evict(victim)
                log.append({"type": "evict", "step": step, "cluster": victim})
            if self.capacity_blocks - self.occupied_blocks < needed:
                log.append({"type": "reject", "step": step, "cluster": cid})
                self._staged.pop(cid, None)
                continue
            blocks = self._staged.pop(cid)
            slot_ids = []
            for block in blocks:
                slot = self._alloc_slot()
                self.slots[slot] = block
                slot_ids.append(slot)
            desc.fast_slot_ids = slot_ids
            self.lru[cid] = None
            # admission copies from the execution buffer, fast-tier internal
            self.bytes_fast_internal += needed * self.store.block_size_bytes
            log.append({"type": "admit", "step": step, "cluster": cid, "blocks": needed})
        self._staged.clear()
        self.event_log.extend(log)
        if self.occupied_blocks > self.capacity_blocks:
            raise IntegrityError("block cache exceeded its capacity")
        return log

    def stats(self) -> dict:
        accesses = self.hits + self.misses
        return {
            "hits": self.hits,
            "misses": self.misses,
            "hit_ratio": self.hits / accesses if accesses else 0.0,
            "bytes_slow_to_fast": self.bytes_slow_to_fast,
            "bytes_fast_internal": self.bytes_fast_internal,
            "capacity_blocks": self.capacity_blocks,
            "occupied_blocks": self.occupied_blocks,
        }
