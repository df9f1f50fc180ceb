"""Meta-path embeddings: harmonic composition of per-hop relation vectors.

The hop at distance m contributes its meta-relation embedding scaled by
1/m, so closer hops dominate and path length stays visible; mean/max/sum
poolings exist only as ablation comparators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .context_sampler import MetaPathInstance
from .feature_space import EmbeddingTable

POOL_MODES = ("mean", "max", "sum")


@dataclass(frozen=True)
class PathEmbedding:
    vector: np.ndarray


def encode_path(path: MetaPathInstance, rel_table: EmbeddingTable) -> PathEmbedding:
    """Harmonic-weighted sum of the path's relation embeddings."""
    if path.length == 0:
        raise ValueError("cannot encode an empty path")
    acc = np.zeros(rel_table.dim, dtype=rel_table.vectors.dtype)
    for m, rid in enumerate(path.relation_ids, start=1):
        acc += rel_table.row(rid) / m
    return PathEmbedding(acc)


def encode_path_pooled(path: MetaPathInstance, rel_table: EmbeddingTable,
                       mode: str) -> PathEmbedding:
    if path.length == 0:
        raise ValueError("cannot encode an empty path")
    if mode not in POOL_MODES:
        raise ValueError(f"unknown pooling mode {mode!r}")
    rows = rel_table.vectors[list(path.relation_ids)]
    if mode == "mean":
        return PathEmbedding(rows.mean(axis=0))
    if mode == "max":
        return PathEmbedding(rows.max(axis=0))
    return PathEmbedding(rows.sum(axis=0))


def encode_paths_batch(rel_ids: np.ndarray, lengths: np.ndarray,
                       rel_table: EmbeddingTable) -> np.ndarray:
    """Harmonic encoding of many padded paths at once.

    rel_ids is [M, l_max] padded with -1 past each path's length.
    """
    M, l_max = rel_ids.shape
    out = np.zeros((M, rel_table.dim), dtype=rel_table.vectors.dtype)
    for m in range(l_max):
        active = lengths > m
        if not active.any():
            break
        ids = rel_ids[active, m]
        out[active] += rel_table.vectors[ids] / (m + 1)
    return out
