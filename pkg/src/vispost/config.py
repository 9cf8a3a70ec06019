"""Pipeline configuration: one YAML file plus ``--set section.key=value``
overrides. Every section maps onto one parameter dataclass."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional

import yaml

from .bitrack import BiTrackParams
from .ensemble import EnsembleParams
from .evaluation import EvalConfig
from .fusion import FusionConfig
from .tracker import TrackerParams

WORKERS_ENV = "VISPOST_WORKERS"

_SECTIONS = {
    "tracker": TrackerParams,
    "bitrack": BiTrackParams,
    "ensemble": EnsembleParams,
    "eval": EvalConfig,
}
_TOP_LEVEL = {"use_bitrack", "trackable_min_len", "workers", "seed"}


@dataclass(frozen=True)
class PipelineConfig:
    tracker: TrackerParams = field(default_factory=TrackerParams)
    bitrack: BiTrackParams = field(default_factory=BiTrackParams)
    ensemble: EnsembleParams = field(default_factory=EnsembleParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    fusion: Optional[FusionConfig] = None
    use_bitrack: bool = True
    trackable_min_len: int = 2
    workers: int = 1
    seed: Optional[int] = None

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.trackable_min_len < 1:
            raise ValueError(f"trackable_min_len must be >= 1, got {self.trackable_min_len}")

    def require_seed(self) -> int:
        if self.seed is None:
            raise ValueError("this command draws random numbers; set a seed (--seed or 'seed:' in the config)")
        return self.seed

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _set_path(tree: Dict[str, Any], dotted: str, value: Any):
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot set {dotted!r}: {part!r} is not a section")
    node[parts[-1]] = value


def parse_override(text: str):
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def build_config(tree: Dict[str, Any]) -> PipelineConfig:
    tree = dict(tree or {})
    kwargs: Dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        section = tree.pop(name, None) or {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ValueError(f"unknown keys in [{name}]: {sorted(unknown)}")
        if name == "eval":
            section = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
        kwargs[name] = cls(**section)
    fusion = tree.pop("fusion", None)
    for key in list(tree):
        if key not in _TOP_LEVEL:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = tree.pop(key)
    if fusion:
        fusion = dict(fusion)
        fusion.setdefault("seed", kwargs.get("seed"))
        if fusion["seed"] is None:
            raise ValueError("fusion section needs a seed")
        kwargs["fusion"] = FusionConfig(**fusion)
    env_workers = os.environ.get(WORKERS_ENV)
    if env_workers:
        kwargs["workers"] = int(env_workers)
    return PipelineConfig(**kwargs)


def load_config(path: Optional[str] = None, overrides: Iterable[str] = ()) -> PipelineConfig:
    tree: Dict[str, Any] = {}
    if path:
        with open(path) as fh:
            tree = yaml.safe_load(fh) or {}
        if not isinstance(tree, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    for text in overrides:
        key, value = parse_override(text)
        _set_path(tree, key, value)
    return build_config(tree)
