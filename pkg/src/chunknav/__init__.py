"""Hierarchical action chunking with entropy-selected execution horizons."""
from .entropy import ChunkPrediction, EntropyProfile, ExecMode, chunk_entropy, executed_prefix, select_horizon
from .grammar import Action, ActionChunk, ActionUnits, SubChunk, chunk_text, flatten, parse_chunk, render_chunk
from .hpac import ChunkedSequence, HpacConfig, chunk_trajectory, merge_level1, merge_level2

__version__ = "0.1.0"

__all__ = [
    "Action", "ActionChunk", "ActionUnits", "ChunkPrediction", "ChunkedSequence",
    "EntropyProfile", "ExecMode", "HpacConfig", "SubChunk", "chunk_entropy", "chunk_text",
    "chunk_trajectory", "executed_prefix", "flatten", "merge_level1", "merge_level2",
    "parse_chunk", "render_chunk", "select_horizon",
]
