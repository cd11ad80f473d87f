"""Accuracy metrics: brute-force top-k recall and output error."""

from __future__ import annotations

import numpy as np


def top_k_token_ids(q, keys, k: int) -> np.ndarray:
    """Brute-force top-k token ids by q . K descending, ties to the lower id."""
    keys = np.asarray(keys, dtype=np.float64)
    n = keys.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    scores = keys @ np.asarray(q, dtype=np.float64)
    order = np.lexsort((np.arange(n), -scores))
    return order[:k]


def recall_at_k(retrieved_token_ids, q, keys, k: int) -> float:
    """Fraction of the true top-k inner-product tokens present in the
    retrieved set."""
    if k == 0:
        return 1.0
    top = top_k_token_ids(q, keys, k)
    retrieved = set(int(t) for t in retrieved_token_ids)
    return sum(1 for t in top if int(t) in retrieved) / k


def relative_l2(approx, exact) -> float:
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.linalg.norm(exact)
    if denom == 0.0:
        return float(np.linalg.norm(np.asarray(approx, dtype=np.float64)))
    return float(np.linalg.norm(np.asarray(approx, dtype=np.float64) - exact) / denom)
