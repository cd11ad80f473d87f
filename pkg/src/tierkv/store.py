"""Slow-tier block storage for raw KV data.

All key/value vectors live here, packed into fixed-size blocks that are
private to one cluster.  Reads are whole-block and every read is charged to
a byte counter regardless of how full the block is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrityError

SCALAR_BYTES = 4  # float32 throughout


@dataclass
class TokenKV:
    """One token's key and value vector plus its position in the context."""

    key: np.ndarray
    value: np.ndarray
    token_id: int


@dataclass
class Block:
    block_id: int
    payload: list  # list[TokenKV], at most block_capacity entries
    occupied: int = field(init=False)

    def __post_init__(self):
        self.occupied = len(self.payload)


def block_capacity(block_size_bytes: int, d: int) -> int:
    """Tokens per block: a token is one key plus one value, 4 bytes a scalar."""
    cap = block_size_bytes // (2 * d * SCALAR_BYTES)
    if cap < 1:
        raise ConfigError(
            f"block_size_bytes={block_size_bytes} cannot hold a single token at d={d}"
        )
    return cap


class SlowTierStore:
    """Per-head slow-tier store.

    Blocks are cluster-private: `pack_cluster` always allocates fresh blocks,
    so the last block of a cluster may be fragmented.  Fragmented space is
    accounted as transferred (whole-block reads) but never surfaces as data.
    """

    def __init__(self, d: int, block_size_bytes: int = 2048, head: int = 0):
        if d <= 0:
            raise ConfigError(f"dimension must be positive, got {d}")
        self.d = d
        self.block_size_bytes = block_size_bytes
        self.block_capacity = block_capacity(block_size_bytes, d)
        self.head = head
        self.blocks: dict[int, Block] = {}
        self.bytes_read_total = 0
        self.bytes_written_total = 0
        self._next_block_id = 0
        self._packed_token_ids: set[int] = set()

    def pack_cluster(self, members: list[TokenKV]) -> list[int]:
        """Pack an ordered member list into ceil(len/capacity) new blocks."""
        if not members:
            raise IntegrityError("pack_cluster called with empty member list")
        for t in members:
            if len(t.key) != self.d or len(t.value) != self.d:
                raise ConfigError(
                    f"token {t.token_id} has dimension "
                    f"{len(t.key)}/{len(t.value)}, store expects {self.d}"
                )
            if t.token_id in self._packed_token_ids:
                raise IntegrityError(f"token {t.token_id} already packed in this store")
        block_ids = []
        cap = self.block_capacity
        for start in range(0, len(members), cap):
            bid = self._next_block_id
            self._next_block_id += 1
            self.blocks[bid] = Block(bid, members[start : start + cap])
            block_ids.append(bid)
            self.bytes_written_total += self.block_size_bytes
        self._packed_token_ids.update(t.token_id for t in members)
        return block_ids

    def read_blocks(self, block_ids: list[int]) -> list[tuple[int, list[TokenKV]]]:
        """Whole-block reads in request order; charges full blocks to the counter."""
        out = []
        for bid in block_ids:
            block = self.blocks.get(bid)
            if block is None:
                raise IntegrityError(f"unknown block_id {bid}")
            out.append((bid, block.payload))
        self.bytes_read_total += len(block_ids) * self.block_size_bytes
        return out

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)
