"""Attention kernels: exact partials, centroid-based estimation, and merging.

Every exponential is taken relative to a running maximum, so partials from
different zones can be merged without overflow and in any order.  The scale
is fixed at 1/sqrt(d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class PartialAttention:
    """Streaming-softmax accumulator over a subset of the context.

    numerator and denominator are stored rescaled by exp(-running_max).
    An empty partial (count == 0) is the identity element for merge.
    """

    running_max: float
    numerator: np.ndarray
    denominator: float
    count: int

    @classmethod
    def empty(cls, d: int) -> "PartialAttention":
        return cls(-np.inf, np.zeros(d), 0.0, 0)


@dataclass
class AttentionOutput:
    output: np.ndarray
    denominator_exact_coverage: float
    log_denominator: float  # log of the softmax denominator actually used


@dataclass
class OpCounter:
    count: int = 0

    def reset(self):
        self.count = 0


# cluster terms evaluated by estimate_partial; used to check that the
# estimation cost scales with the number of clusters, not tokens
estimation_ops = OpCounter()


def oracle_attention(q, keys, values) -> np.ndarray:
    """Ground-truth softmax(q.K^T/sqrt(d)).V with max-subtraction."""
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if keys.shape[0] == 0:
        raise ConfigError("oracle_attention needs at least one token")
    q = np.asarray(q, dtype=np.float64)
    scores = keys @ q / np.sqrt(q.shape[0])
    w = np.exp(scores - scores.max())
    return (w @ values) / w.sum()


def exact_partial(q, keys, values) -> PartialAttention:
    """Exact attention partial over a token subset (empty subset allowed)."""
    q = np.asarray(q, dtype=np.float64)
    d = q.shape[0]
    keys = np.asarray(keys, dtype=np.float64).reshape(-1, d)
    if keys.shape[0] == 0:
        return PartialAttention.empty(d)
    values = np.asarray(values, dtype=np.float64).reshape(-1, d)
    scores = keys @ q / np.sqrt(d)
    m = float(scores.max())
    w = np.exp(scores - m)
    return PartialAttention(m, w @ values, float(w.sum()), keys.shape[0])


def estimate_partial(q, centroids, value_sums, sizes,
                     scores=None) -> PartialAttention:
    """Approximate a set of clusters through their centroids and value sums.

    Each cluster contributes size * exp(q.C/sqrt(d)) to the denominator and
    exp(q.C/sqrt(d)) * value_sum to the numerator, i.e. all members share the
    centroid weight.  Cost is one term per cluster regardless of cluster size.
    Precomputed q.C scores from ranking may be passed in.
    """
    q = np.asarray(q, dtype=np.float64)
    d = q.shape[0]
    centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, d)
    e = centroids.shape[0]
    if e == 0:
        return PartialAttention.empty(d)
    value_sums = np.asarray(value_sums, dtype=np.float64).reshape(-1, d)
    sizes = np.asarray(sizes, dtype=np.float64).reshape(-1)
    if scores is None:
        scores = centroids @ q
    scaled = np.asarray(scores, dtype=np.float64) / np.sqrt(d)
    estimation_ops.count += e
    m = float(scaled.max())
    w = np.exp(scaled - m)
    return PartialAttention(m, w @ value_sums, float((sizes * w).sum()), e)


def tail_denominator_partial(q, centroids, sizes, scores=None) -> PartialAttention:
    """Denominator-only contribution of dropped clusters (tail_mode=denominator_only)."""
    p = estimate_partial(q, centroids, np.zeros_like(np.asarray(centroids, dtype=np.float64)),
                         sizes, scores)
    p.numerator = np.zeros_like(p.numerator)
    return p


def merged_sums(partials) -> tuple[float, np.ndarray, float, int]:
    """Rescale all partials to a common max and sum them."""
    live = [p for p in partials if p.count > 0]
    if not live:
        raise ConfigError("merge requires at least one non-empty partial")
    gmax = max(p.running_max for p in live)
    d = live[0].numerator.shape[0]
    num = np.zeros(d)
    den = 0.0
    count = 0
    for p in live:
        scale = np.exp(p.running_max - gmax)
        num += p.numerator * scale
        den += p.denominator * scale
        count += p.count
    return gmax, num, den, count


def merge(partials, exact_partials=None) -> AttentionOutput:
    """Combine zone partials into the final output.

    exact_partials, when given, marks the subset whose denominator mass is
    exact; the coverage diagnostic reports their share of the total.
    """
    gmax, num, den, _ = merged_sums(partials)
    if exact_partials is None:
        coverage = 1.0
    else:
        exact_den = sum(
            p.denominator * np.exp(p.running_max - gmax)
            for p in exact_partials if p.count > 0
        )
        coverage = float(exact_den / den) if den > 0 else 0.0
    return AttentionOutput(num / den, coverage, float(gmax + np.log(den)))
