"""Batched model execution: target nodes through gated CGT expert layers.

A DatasetBundle pins one graph to its embedding tables; embed_nodes runs
the full context pipeline (walk sampling, path encoding, gating, expert
layers) for a batch of targets on one tape. All randomness is derived from
the seed argument, so identical calls are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cgt_layer import CgtDims, cgt_forward
from .config import RunConfig, derive_seed
from .context_encoding import encode_paths_batch
from .context_sampler import sample_contexts
from .feature_space import (EmbeddingTable, MetaRelationVocab,
                            relation_ids_per_slot, require_same_dim)
from .graph_store import TextAttributedGraph
from .moe_gating import ExpertSet, GateParams, gate_batch, init_expert_set, init_gate
from .task_heads import LpHead, NcHead, init_lp_head, init_nc_head


@dataclass
class LayerBlock:
    experts: ExpertSet
    gate: GateParams


@dataclass
class ModelState:
    blocks: list
    nc_head: NcHead
    lp_head: LpHead
    config: RunConfig
    trained_datasets: list = field(default_factory=list)
    step: int = 0

    def named_params(self) -> dict:
        out = {}
        for l, block in enumerate(self.blocks):
            out.update(block.experts.named(f"layer{l}."))
            out.update(block.gate.named(f"layer{l}."))
        out.update(self.nc_head.named())
        out.update(self.lp_head.named())
        return out

    def param_count(self) -> int:
        return sum(p.values.size for p in self.named_params().values())


def apply_precision(config: RunConfig) -> None:
    ad.set_default_dtype(np.float64 if config.precision == "f64" else np.float32)
    ad.set_checked(config.precision == "f64")


def init_model(config: RunConfig) -> ModelState:
    """Seeded parameter initialization per the run configuration."""
    apply_precision(config)
    rng = np.random.Generator(np.random.PCG64(derive_seed(config.seed, "init")))
    dims = CgtDims(d_in=config.d, hidden=config.hidden, d_out=config.d)
    blocks = []
    for _ in range(config.layers):
        experts = init_expert_set(rng, config.n_experts, dims)
        gate = init_gate(rng, config.n_experts, config.k, config.d)
        blocks.append(LayerBlock(experts, gate))
    nc_head = init_nc_head(rng, config.d, config.d, config.head_hidden, config.leaky_slope)
    lp_head = init_lp_head(rng, config.d, config.head_hidden, config.leaky_slope)
    state = ModelState(blocks, nc_head, lp_head, config)
    if config.freeze_film_wp:
        for block in blocks:
            for e in block.experts.experts:
                for t in (e.W_p, e.film_gamma_w, e.film_gamma_b,
                          e.film_eta_w, e.film_eta_b):
                    t.values[...] = 0.0
    return state


def trainable_params(state: ModelState, head_only: bool = False) -> dict:
    """Parameters the optimizer may update, honoring freeze flags."""
    named = state.named_params()
    if head_only:
        return {k: v for k, v in named.items() if k.startswith(("nc_head.", "lp_head."))}
    if state.config.freeze_film_wp:
        frozen = ("W_p", "film_gamma_w", "film_gamma_b", "film_eta_w", "film_eta_b")
        return {k: v for k, v in named.items() if not k.endswith(frozen)}
    return named


@dataclass
class DatasetBundle:
    """One graph plus its unified embedding tables, ready for execution."""

    dataset_id: str
    graph: TextAttributedGraph
    node_table: EmbeddingTable
    rel_table: EmbeddingTable
    label_table: EmbeddingTable
    vocab: MetaRelationVocab
    rel_of_slot: np.ndarray = None
    node_vecs: np.ndarray = None
    rel_vecs: np.ndarray = None
    label_vecs: np.ndarray = None

    def __post_init__(self):
        require_same_dim(self.node_table, self.rel_table, self.label_table)
        if len(self.node_table) != self.graph.n_nodes:
            raise ValueError("node table row count does not match graph")
        if len(self.rel_table) != len(self.vocab):
            raise ValueError("relation table row count does not match vocabulary")
        if self.rel_of_slot is None:
            self.rel_of_slot = relation_ids_per_slot(self.graph, self.vocab)
        dt = ad.default_dtype()
        self.node_vecs = self.node_table.vectors.astype(dt)
        self.rel_vecs = self.rel_table.vectors.astype(dt)
        self.label_vecs = self.label_table.vectors.astype(dt)

    @property
    def dim(self) -> int:
        return self.node_table.dim


def with_graph(bundle: DatasetBundle, graph: TextAttributedGraph) -> DatasetBundle:
    """Same tables over a different edge set (training subgraph for LP)."""
    return DatasetBundle(bundle.dataset_id, graph, bundle.node_table,
                         bundle.rel_table, bundle.label_table, bundle.vocab)


def _gather_context(bundle: DatasetBundle, ids: np.ndarray, n_walks: int,
                    l_max: int, seed: int, counters=None):
    """Sampled, canonically ordered neighbor rows for a batch of targets."""
    endpoints, rel_ids, trunc, started = sample_contexts(
        bundle.graph, ids, n_walks, l_max, seed, bundle.rel_of_slot, counters)
    B = len(ids)
    mask = started.reshape(-1)
    seg = np.repeat(np.arange(B, dtype=np.int64), n_walks)[mask]
    ep = endpoints.reshape(-1)[mask]
    lengths = trunc.reshape(-1)[mask]
    rels = rel_ids.reshape(B * n_walks, l_max)[mask]
    # canonical neighbor order: (target, endpoint, relation ids, length)
    keys = [lengths] + [rels[:, c] for c in range(l_max - 1, -1, -1)] + [ep, seg]
    order = np.lexsort(keys)
    seg, ep, lengths, rels = seg[order], ep[order], lengths[order], rels[order]
    h_v = bundle.node_vecs[ep]
    rel_table = EmbeddingTable(bundle.dim, bundle.rel_vecs, bundle.rel_table.key_kind)
    h_p = encode_paths_batch(rels, lengths, rel_table)
    return seg, ep, h_v, h_p


def embed_nodes(state: ModelState, bundle: DatasetBundle, node_ids, *,
                train: bool = False, seed: int = 0, counters: dict | None = None,
                trace: list | None = None) -> Tensor:
    """Final representations [B, d] of the given targets."""
    cfg = state.config
    ids = np.asarray(node_ids, dtype=np.int64)
    B = len(ids)
    h = Tensor(bundle.node_vecs[ids])
    for l, block in enumerate(state.blocks):
        seg, ep, h_v, h_p = _gather_context(
            bundle, ids, cfg.n_walks, cfg.l_max,
            derive_seed(seed, "ctx", l), counters)
        weights, selected = gate_batch(h, block.gate, train, derive_seed(seed, "gate", l))
        if counters is not None:
            load = counters.setdefault("gate_load", np.zeros(block.gate.n, dtype=np.int64))
            np.add.at(load, selected.reshape(-1), 1)
            counters["expert_runs"] = counters.get("expert_runs", 0) + selected.size
        out = None
        for i in range(block.gate.n):
            routed = np.nonzero((selected == i).any(axis=1))[0]
            if routed.size == 0:
                continue
            row_mask = np.isin(seg, routed)
            sub_seg = np.searchsorted(routed, seg[row_mask])
            layer = cgt_forward(block.experts.experts[i],
                                ad.gather_rows(h, routed),
                                Tensor(h_v[row_mask]), Tensor(h_p[row_mask]),
                                sub_seg, routed.size, cfg.leaky_slope,
                                cfg.dropout, train, derive_seed(seed, "cgt", l, i))
            if trace is not None:
                trace.append({"layer": l, "expert": i,
                              "targets": ids[routed].tolist(),
                              "rows": ep[row_mask].tolist(),
                              "seg": sub_seg.tolist(),
                              "alpha": layer.attention.tolist()})
            g_col = ad.gather_rows(ad.slice_axis(weights, 1, i, i + 1), routed)
            contrib = ad.mul(g_col, layer.h)
            part = ad.segment_sum(contrib, routed, B)
            out = part if out is None else ad.add(out, part)
        h = out
    return h
