"""Engine and index configuration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

TAIL_MODES = ("drop", "denominator_only")
DENOMINATOR_MODES = ("merged", "eq2")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class IndexConfig:
    centroid_ratio: int = 16        # tokens per centroid on average
    segment_size: int = 8192        # prefill clustering segment length
    kmeans_iters: int = 10
    update_segment: int = 1024      # decode-time clustering batch
    sink_tokens: int = 4
    local_window: int = 64
    retrieval_fraction: float = 0.018
    estimation_fraction: float = 0.232
    tail_mode: str = "drop"
    rng_seed: int = 0

    def validate(self):
        for name in ("centroid_ratio", "segment_size", "kmeans_iters", "update_segment"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("sink_tokens", "local_window"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("retrieval_fraction", "estimation_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {v}")
        if self.retrieval_fraction + self.estimation_fraction > 1.0 + 1e-12:
            raise ConfigError("retrieval_fraction + estimation_fraction must be <= 1")
        if self.tail_mode not in TAIL_MODES:
            raise ConfigError(f"tail_mode must be one of {TAIL_MODES}, got {self.tail_mode!r}")
        return self


@dataclass
class EngineConfig:
    index: IndexConfig = field(default_factory=IndexConfig)
    cache_fraction: float = 0.05
    block_size_bytes: int = 2048
    denominator_mode: str = "merged"
    metrics_k: int = 100
    rng_seed: int = 0

    def validate(self):
        self.index.validate()
        if not 0.0 <= self.cache_fraction <= 1.0:
            raise ConfigError(f"cache_fraction must be in [0,1], got {self.cache_fraction}")
        if self.block_size_bytes <= 0:
            raise ConfigError(f"block_size_bytes must be positive, got {self.block_size_bytes}")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ConfigError(
                f"denominator_mode must be one of {DENOMINATOR_MODES}, "
                f"got {self.denominator_mode!r}"
            )
        if self.metrics_k <= 0:
            raise ConfigError(f"metrics_k must be positive, got {self.metrics_k}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        flat = d.pop("index")
        flat.update(d)
        return flat

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        data = dict(data)
        index_keys = {f.name for f in fields(IndexConfig)}
        engine_keys = {f.name for f in fields(cls)} - {"index"}
        idx_kwargs, eng_kwargs = {}, {}
        for key, val in data.items():
            if key == "rng_seed":
                # one seed in the file drives both the index and the engine
                idx_kwargs[key] = val
                eng_kwargs[key] = val
            elif key in index_keys:
                idx_kwargs[key] = val
            elif key in engine_keys:
                eng_kwargs[key] = val
            else:
                raise ConfigError(f"unknown config key {key!r}")
        cfg = cls(index=IndexConfig(**idx_kwargs), **eng_kwargs)
        return cfg.validate()
