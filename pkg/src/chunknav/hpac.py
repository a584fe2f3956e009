"""Hierarchical probabilistic action chunking.

Level 1 merges repetitions of the same atomic action into sub-chunks of at
most three, each merge accepted with probability ``merge_prob``.  Level 2
greedily packs up to ``max_chunk_size`` consecutive sub-chunks into a chunk,
regardless of their kinds.

Randomness comes from :class:`random.Random` (MT19937), whose stream is
stable across platforms and Python versions for integer seeds.  Exactly one
draw is consumed for every index whose action equals its predecessor while the
open sub-chunk still has room, in sequence order.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Sequence

from .grammar import MAX_SUBCHUNK_COUNT, Action, ActionChunk, SubChunk

RNG_ALGORITHM = "mt19937"
_MASK64 = (1 << 64) - 1


class EmptySequence(ValueError):
    pass


class StopNotTerminal(ValueError):
    pass


@dataclass(frozen=True)
class HpacConfig:
    merge_prob: float = 0.7
    max_chunk_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.merge_prob <= 1.0:
            raise ValueError(f"merge_prob={self.merge_prob} outside [0, 1]")
        if self.max_chunk_size < 1:
            raise ValueError("max_chunk_size must be >= 1")


@dataclass
class ChunkedSequence:
    chunks: list[ActionChunk]
    source_len: int
    boundaries: list[tuple[int, int]] = field(default_factory=list)


def make_rng(seed: int) -> random.Random:
    return random.Random(seed & _MASK64)


def derive_seed(seed: int, key: str) -> int:
    """``seed`` xor a stable 64-bit hash of ``key``."""
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return (seed ^ int.from_bytes(digest, "big")) & _MASK64


def uniform_draw(rng: random.Random) -> float:
    # (0, 1] so that p=0 never merges and p=1 always merges
    return 1.0 - rng.random()


def merge_level1(actions: Sequence[Action], p: float, rng: random.Random) -> list[SubChunk]:
    if not actions:
        raise EmptySequence("cannot chunk an empty action sequence")
    out: list[SubChunk] = []
    kind = actions[0]
    count = 1
    for i in range(1, len(actions)):
        a = actions[i]
        if (
            a is kind
            and a is not Action.STOP
            and count < MAX_SUBCHUNK_COUNT
            and uniform_draw(rng) <= p
        ):
            count += 1
        else:
            out.append(SubChunk(kind, count))
            kind, count = a, 1
    out.append(SubChunk(kind, count))
    return out


def merge_level2(sub_chunks: Sequence[SubChunk], n: int) -> list[ActionChunk]:
    if not sub_chunks:
        raise EmptySequence("cannot group an empty sub-chunk list")
    if n < 1:
        raise ValueError("n must be >= 1")
    return [ActionChunk(tuple(sub_chunks[i:i + n])) for i in range(0, len(sub_chunks), n)]


def chunk_trajectory(
    actions: Sequence[Action],
    config: HpacConfig = HpacConfig(),
    rng: random.Random | None = None,
) -> ChunkedSequence:
    """Chunk ``actions``; a trailing stop becomes its own final chunk."""
    if not actions:
        raise EmptySequence("cannot chunk an empty action sequence")
    for i, a in enumerate(actions[:-1]):
        if a is Action.STOP:
            raise StopNotTerminal(f"stop at index {i} is not the final action")
    if rng is None:
        rng = make_rng(config.seed)

    body = actions[:-1] if actions[-1] is Action.STOP else actions
    chunks: list[ActionChunk] = []
    if body:
        chunks = merge_level2(merge_level1(body, config.merge_prob, rng), config.max_chunk_size)
    if len(body) < len(actions):
        chunks.append(ActionChunk((SubChunk(Action.STOP, 1),)))

    boundaries = []
    start = 0
    for chunk in chunks:
        end = start + len(chunk)
        boundaries.append((start, end))
        start = end
    return ChunkedSequence(chunks=chunks, source_len=len(actions), boundaries=boundaries)
