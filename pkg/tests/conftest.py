import numpy as np
import pytest

from tierkv.store import SlowTierStore, TokenKV


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_tokens(rng, n, d, start_id=0):
    keys = rng.standard_normal((n, d)).astype(np.float32)
    values = rng.standard_normal((n, d)).astype(np.float32)
    return [TokenKV(keys[i], values[i], start_id + i) for i in range(n)]


@pytest.fixture
def store():
    return SlowTierStore(d=8, block_size_bytes=256)  # capacity 4 tokens/block
