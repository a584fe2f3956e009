"""Chunk-level action entropy and entropy-guided execution horizon.

Only action-type token positions contribute to a chunk's entropy; numeric
token distributions are carried along but never read.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .grammar import ActionChunk

SUM_TOLERANCE = 1e-6


class InvalidDistribution(ValueError):
    pass


class EmptyProfile(ValueError):
    pass


def as_distribution(probs: Mapping[int, float] | Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a token distribution and return it as a float array."""
    if isinstance(probs, Mapping):
        size = max(probs) + 1 if probs else 0
        arr = np.zeros(size)
        for k, v in probs.items():
            arr[k] = v
    else:
        arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidDistribution("distribution must be a non-empty vector")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise InvalidDistribution("negative or non-finite probability mass")
    total = float(arr.sum())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise InvalidDistribution(f"probabilities sum to {total}")
    return arr


@dataclass
class ChunkPrediction:
    chunk: ActionChunk
    type_token_dists: list[np.ndarray]
    numeric_token_dists: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.type_token_dists) != len(self.chunk.sub_chunks):
            raise ValueError(
                f"{len(self.type_token_dists)} type-token distributions for "
                f"{len(self.chunk.sub_chunks)} sub-chunks"
            )


@dataclass
class EntropyProfile:
    H: list[float]
    t_star: int
    executed: list[ActionChunk]


def token_entropy(dist) -> float:
    p = as_distribution(dist)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def chunk_entropy(pred: ChunkPrediction) -> float:
    """Sum of Shannon entropies (nats) over the action-type positions."""
    return sum(token_entropy(d) for d in pred.type_token_dists)


def select_horizon(H: Sequence[float]) -> int:
    """1-based cut: first strict entropy drop, else drop the last chunk.

    A single-chunk profile returns 1 so that the agent always moves.
    """
    T = len(H)
    if T == 0:
        raise EmptyProfile("no chunks to select from")
    if T == 1:
        return 1
    for t in range(T - 1):
        if H[t] > H[t + 1]:
            return t + 1
    return T - 1


def executed_prefix(preds: Sequence[ChunkPrediction]) -> EntropyProfile:
    if not preds:
        raise EmptyProfile("no chunk predictions")
    H = [chunk_entropy(p) for p in preds]
    t_star = select_horizon(H)
    return EntropyProfile(H=H, t_star=t_star, executed=[p.chunk for p in preds[:t_star]])


@dataclass(frozen=True)
class ExecMode:
    """How many predicted chunks to execute: ``all``, ``fixed:k`` or ``entropy``."""

    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("all", "fixed", "entropy"):
            raise ValueError(f"unknown exec mode {self.kind!r}")
        if self.kind == "fixed" and self.k < 1:
            raise ValueError("fixed truncation needs k >= 1")

    @classmethod
    def parse(cls, text: str) -> "ExecMode":
        text = text.strip().lower()
        m = re.fullmatch(r"fixed[:@](\d+)", text)
        if m:
            return cls("fixed", int(m.group(1)))
        return cls(text)

    def __str__(self):
        return f"fixed:{self.k}" if self.kind == "fixed" else self.kind

    def horizon(self, preds: Sequence[ChunkPrediction]) -> tuple[int, list[float]]:
        """Return ``(t_star, H)`` for ``preds`` under this mode."""
        if not preds:
            raise EmptyProfile("no chunk predictions")
        H = [chunk_entropy(p) for p in preds]
        if self.kind == "all":
            return len(preds), H
        if self.kind == "fixed":
            return min(self.k, len(preds)), H
        return select_horizon(H), H


def max_entropy(n_positions: int, vocab_size: int) -> float:
    return n_positions * math.log(vocab_size)
