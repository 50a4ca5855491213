"""Run configuration: one YAML file drives every pipeline stage."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .strategies import BRANCHES, StrategyConfig


class ConfigError(Exception):
    """Contradictory or incomplete configuration."""


@dataclass
class DatasetConfig:
    reviews: Optional[Path] = None
    field_map: dict[str, str] = field(default_factory=dict)
    min_item_freq: int = 5
    min_user_len: int = 6
    max_user_len: int = 20
    sample_size: int = 3000
    sample_seed: int = 1021


@dataclass
class EmbeddingConfig:
    source: str = "stub"          # stub | service | files
    dim: int = 16                 # stub dimensionality
    url: Optional[str] = None     # service endpoint
    items_file: Optional[Path] = None      # pre-built vector files
    sequences_file: Optional[Path] = None


@dataclass
class GatewayConfig:
    backend: str = "mock"         # mock | http | cassette
    url: Optional[str] = None
    model: str = "llama3-8b-instruct"
    token_env: str = "GRAPHREC_API_TOKEN"
    cassette: Optional[Path] = None
    strict: bool = True
    max_concurrency: int = 4
    max_retries: int = 3
    timeout: float = 120.0


@dataclass
class EvalConfig:
    cutoffs: tuple[int, ...] = (5, 10, 20)
    ground_k: int = 10
    popularity: bool = False


@dataclass
class RunConfig:
    workdir: Path = Path("runs/default")
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    # Stage artifact locations, all under workdir.
    @property
    def manifest_path(self) -> Path:
        return self.workdir / "manifest.jsonl"

    @property
    def item_vectors_path(self) -> Path:
        if self.embedding.source == "files" and self.embedding.items_file:
            return Path(self.embedding.items_file)
        return self.workdir / "items.vec"

    @property
    def sequence_vectors_path(self) -> Path:
        if self.embedding.source == "files" and self.embedding.sequences_file:
            return Path(self.embedding.sequences_file)
        return self.workdir / "sequences.vec"

    @property
    def run_dir(self) -> Path:
        return self.workdir / "records"

    def gateway_token(self) -> Optional[str]:
        return os.environ.get(self.gateway.token_env)


def _take(section: dict, cls, **overrides):
    known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{**section, **overrides})


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc

    dataset = _take(raw.get("dataset", {}), DatasetConfig)
    if dataset.reviews is not None:
        dataset.reviews = Path(dataset.reviews)
    embedding = _take(raw.get("embedding", {}), EmbeddingConfig)
    gw = _take(raw.get("gateway", {}), GatewayConfig)

    strat_raw = dict(raw.get("strategy", {}))
    disable = strat_raw.pop("disable", [])
    if disable:
        enabled = tuple(b for b in BRANCHES if b not in set(disable))
        strat_raw["enabled_branches"] = enabled
    if "enabled_branches" in strat_raw:
        strat_raw["enabled_branches"] = tuple(strat_raw["enabled_branches"])
    if "name" in strat_raw:
        strat_raw["strategy"] = strat_raw.pop("name")
    strategy = _take(strat_raw, StrategyConfig)

    ev_raw = dict(raw.get("evaluation", {}))
    if "cutoffs" in ev_raw:
        ev_raw["cutoffs"] = tuple(int(k) for k in ev_raw["cutoffs"])
    evaluation = _take(ev_raw, EvalConfig)

    cfg = RunConfig(
        workdir=Path(raw.get("workdir", "runs/default")),
        dataset=dataset, embedding=embedding, gateway=gw,
        strategy=strategy, evaluation=evaluation,
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.embedding.source not in ("stub", "service", "files"):
        raise ConfigError(f"unknown embedding source {cfg.embedding.source!r}")
    if cfg.embedding.source == "service" and not cfg.embedding.url:
        raise ConfigError("embedding source 'service' requires embedding.url")
    if cfg.embedding.source == "files" and not (
            cfg.embedding.items_file and cfg.embedding.sequences_file):
        raise ConfigError("embedding source 'files' requires items_file and "
                          "sequences_file")
    if cfg.gateway.backend not in ("mock", "http", "cassette"):
        raise ConfigError(f"unknown gateway backend {cfg.gateway.backend!r}")
    if cfg.gateway.backend == "http" and not cfg.gateway.url:
        raise ConfigError("gateway backend 'http' requires gateway.url")
    if cfg.gateway.backend == "cassette" and not cfg.gateway.cassette:
        raise ConfigError("gateway backend 'cassette' requires gateway.cassette")
    if cfg.strategy.strategy not in ("got", "cot", "cot_sc", "tot"):
        raise ConfigError(f"unknown strategy {cfg.strategy.strategy!r}")
    for k in cfg.evaluation.cutoffs:
        if k < 1:
            raise ConfigError("metric cutoffs must be >= 1")
    if cfg.dataset.min_user_len < 3:
        raise ConfigError("min_user_len must be >= 3 for leave-one-out splits")
