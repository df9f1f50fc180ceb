"""Random-walk context sampling: variable-length typed walks per target.

Each target launches n_walks walks of at most l_max steps over outgoing
adjacency; every surviving walk is truncated to a uniform random prefix and
contributes one (endpoint, meta-path) context neighbor. Randomness is
counter-based per (seed, target, walk, step), so results are independent of
batching and safe to compute concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_space import MetaRelationVocab
from .graph_store import TextAttributedGraph

_U64 = np.uint64
_MIX1 = _U64(0x9E3779B97F4A7C15)
_MIX2 = _U64(0xBF58476D1CE4E5B9)
_MIX3 = _U64(0x94D049BB133111EB)


@dataclass(frozen=True)
class MetaPathInstance:
    """One sampled walk, as the meta-relation id of each hop."""

    relation_ids: tuple
    endpoint: int

    @property
    def length(self) -> int:
        return len(self.relation_ids)


@dataclass
class ContextGraph:
    target: int
    neighbors: list  # (context node id, MetaPathInstance)


def _splitmix(x: np.ndarray) -> np.ndarray:
    z = (x + _MIX1).astype(_U64)
    z = (z ^ (z >> _U64(30))) * _MIX2
    z = (z ^ (z >> _U64(27))) * _MIX3
    return z ^ (z >> _U64(31))


def _target_keys(seed: int, targets: np.ndarray) -> np.ndarray:
    base = _splitmix(np.asarray([seed & 0x7FFFFFFFFFFFFFFF], dtype=_U64))[0]
    return _splitmix(targets.astype(_U64) ^ base)


def _uniform(keys: np.ndarray, counter: np.ndarray) -> np.ndarray:
    bits = _splitmix(keys + counter.astype(_U64))
    return (bits >> _U64(11)).astype(np.float64) * (2.0 ** -53)


def sample_contexts(g: TextAttributedGraph, targets, n_walks: int, l_max: int,
                    seed: int, rel_of_slot: np.ndarray | None = None,
                    counters: dict | None = None):
    """Vectorized walk sampling for a batch of targets.

    Returns (endpoint, rel_ids, lengths, started) arrays shaped
    [B, n_walks(, l_max)]; walks that never left the target are marked dead
    in `started`. rel_ids holds adjacency-slot indices unless rel_of_slot is
    given, in which case hops are mapped to meta-relation ids.
    """
    targets = np.asarray(targets, dtype=np.int64)
    B = len(targets)
    keys = _target_keys(seed, targets)[:, None]           # [B, 1]
    walk_idx = np.arange(n_walks, dtype=np.int64)[None, :]
    stride = l_max + 2

    cur = np.repeat(targets[:, None], n_walks, axis=1)    # [B, N]
    alive = np.ones((B, n_walks), dtype=bool)
    hop_slots = np.full((B, n_walks, l_max), -1, dtype=np.int64)
    visited = np.zeros((B, n_walks, l_max), dtype=np.int64)
    lengths = np.zeros((B, n_walks), dtype=np.int64)

    for step in range(l_max):
        deg = g.out_degree[cur]
        alive = alive & (deg > 0)
        if not alive.any():
            break
        u01 = _uniform(keys, walk_idx * stride + step + 1)
        choice = np.minimum((u01 * np.maximum(deg, 1)).astype(np.int64),
                            np.maximum(deg - 1, 0))
        slots = g.adj_offsets[cur] + choice
        nxt = np.where(alive, g.adj_dst[slots], cur)
        hop_slots[:, :, step] = np.where(alive, slots, -1)
        visited[:, :, step] = nxt
        lengths += alive.astype(np.int64)
        cur = nxt

    started = lengths > 0
    if counters is not None:
        counters["edge_traversals"] = counters.get("edge_traversals", 0) + int(lengths.sum())

    # uniform truncation L in {1..walk length}
    u_trunc = _uniform(keys, walk_idx * stride)
    trunc = np.ones_like(lengths)
    np.minimum(1 + (u_trunc * lengths).astype(np.int64), np.maximum(lengths, 1),
               out=trunc, where=started)
    trunc = np.where(started, trunc, 0)

    idx = np.maximum(trunc - 1, 0)
    endpoints = np.take_along_axis(visited, idx[:, :, None], axis=2)[:, :, 0]
    if rel_of_slot is None or rel_of_slot.size == 0:
        rel_ids = hop_slots
    else:
        rel_ids = np.where(hop_slots >= 0, rel_of_slot[np.maximum(hop_slots, 0)], -1)
    return endpoints, rel_ids, trunc, started


def sample_context(g: TextAttributedGraph, target: int, n_walks: int, l_max: int,
                   seed: int, rel_of_slot: np.ndarray | None = None,
                   counters: dict | None = None) -> ContextGraph:
    """Context graph of one target: at most n_walks (endpoint, path) pairs."""
    if not (0 <= target < g.n_nodes):
        raise ValueError(f"target {target} out of range")
    endpoints, rel_ids, trunc, started = sample_contexts(
        g, [target], n_walks, l_max, seed, rel_of_slot, counters)
    neighbors = []
    for w in range(n_walks):
        if not started[0, w]:
            continue
        L = int(trunc[0, w])
        path = MetaPathInstance(tuple(int(r) for r in rel_ids[0, w, :L]),
                                int(endpoints[0, w]))
        neighbors.append((path.endpoint, path))
    return ContextGraph(int(target), neighbors)


def path_relation_ids(g: TextAttributedGraph, vocab: MetaRelationVocab,
                      walk, etypes=None) -> list:
    """Meta-relation id of every edge along a node walk.

    etypes selects among parallel edges when given; otherwise the first
    adjacency slot linking the pair decides. Non-adjacent pairs indicate a
    sampler bug and raise.
    """
    out = []
    for i in range(len(walk) - 1):
        a, b = int(walk[i]), int(walk[i + 1])
        dsts, ets = g.out_neighbors(a)
        mask = dsts == b
        if not mask.any():
            raise RuntimeError(f"walk nodes {a} -> {b} are not adjacent")
        if etypes is not None:
            want = int(etypes[i])
            if not ((dsts == b) & (ets == want)).any():
                raise RuntimeError(f"no edge of type {want} from {a} to {b}")
            et = want
        else:
            et = int(ets[mask][0])
        out.append(vocab.id_of(g.nodes[a].type_id, et, g.nodes[b].type_id))
    return out
