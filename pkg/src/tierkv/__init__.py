"""tierkv: a desk-scale two-tier KV-cache engine.

Key vectors are clustered per positional segment; per-query the clusters
split into a small exactly-computed retrieval zone, a centroid-estimated
zone, and a dropped tail, merged through a streaming softmax.  Raw KV data
lives in a block-granular slow tier behind an LRU block cache with full
byte accounting.
"""

from .attention import (AttentionOutput, PartialAttention, estimate_partial,
                        exact_partial, merge, oracle_attention)
from .block_cache import BlockCache, ClusterDescriptor, ExecutionBuffer
from .clustering import spherical_kmeans
from .config import EngineConfig, IndexConfig
from .engine import HeadEngine, StepMetrics
from .errors import ConfigError, IntegrityError, TierKVError, TraceFormatError
from .index import ClusterIndex, MetaIndexEntry, ZonePlan, finalize_cluster, plan_zones, rank_clusters
from .metrics import recall_at_k, relative_l2, top_k_token_ids
from .runner import oracle_trace, run_trace
from .store import Block, SlowTierStore, TokenKV, block_capacity
from .synth import SynthParams, gen_trace
from .tracefile import TraceFile, read_trace, write_trace

__version__ = "0.1.0"
