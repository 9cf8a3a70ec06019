"""Dataset fusion with auxiliary classes.

Samples from a source dataset whose category has no counterpart among the
C target classes arrive with the sentinel label C+1. Each such sample is
relabelled to one of K auxiliary classes C+1..C+K: the model's own argmax if
it already points at an auxiliary class, otherwise a uniformly drawn one.
All class indices are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Union

import numpy as np

from .types import Category


@dataclass(frozen=True)
class FusionConfig:
    num_classes: int
    num_aux: int
    seed: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.num_aux < 1:
            raise ValueError(f"num_aux must be >= 1, got {self.num_aux}")


def uniform_aux_draws(n: int, cfg: FusionConfig) -> np.ndarray:
    """Row i's fallback label. Draw i of a single seeded stream, so it depends
    only on (seed, i) and never on how rows are batched."""
    rng = np.random.default_rng(cfg.seed)
    c, k = cfg.num_classes, cfg.num_aux
    return rng.integers(c + 1, c + k + 1, size=n)


def fuse_labels(probs, labels, cfg: FusionConfig) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    c, k = cfg.num_classes, cfg.num_aux
    if probs.ndim != 2 or probs.shape[1] != c + k:
        raise ValueError(f"expected score rows of length {c + k}, got shape {probs.shape}")
    if labels.shape != (probs.shape[0],):
        raise ValueError(f"{labels.shape[0] if labels.ndim else 0} labels for {probs.shape[0]} score rows")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    bad = (labels < 1) | (labels > c + 1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"row {i}: label {labels[i]} outside [1, {c + 1}]")

    # np.argmax returns the first maximum, i.e. ties resolve to the lowest class
    predicted = np.argmax(probs, axis=1) + 1 if probs.shape[0] else np.zeros(0, np.int64)
    aux = labels == c + 1
    agrees = (predicted > c) & (predicted <= c + k)
    fallback = uniform_aux_draws(len(labels), cfg)

    out = labels.copy()
    out[aux & agrees] = predicted[aux & agrees]
    out[aux & ~agrees] = fallback[aux & ~agrees]
    return out


def map_auxiliary(
    source: Iterable[Union[Category, tuple]],
    shared: Iterable[Union[Category, tuple]],
    num_classes: int,
) -> Dict[int, int]:
    """Source category id -> target label.

    ``shared`` lists the target categories (id, name) that also exist in the
    source taxonomy; names are compared case-insensitively. Every other
    source category goes to the auxiliary sentinel ``num_classes + 1``.
    """
    by_name: Dict[str, int] = {}
    for cat in shared:
        cid, name = (cat.id, cat.name) if isinstance(cat, Category) else cat
        key = name.strip().lower()
        if key in by_name:
            raise ValueError(f"duplicate target category name {name!r}")
        if not 1 <= cid <= num_classes:
            raise ValueError(f"target id {cid} for {name!r} outside [1, {num_classes}]")
        by_name[key] = cid
    mapping: Dict[int, int] = {}
    for cat in source:
        cid, name = (cat.id, cat.name) if isinstance(cat, Category) else cat
        mapping[cid] = by_name.get(name.strip().lower(), num_classes + 1)
    return mapping
