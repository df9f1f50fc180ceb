"""Synthetic text-attributed graphs with class signal planted two hops out.

Targets carry generic texts; their 1-hop neighbors (relays / authors, plus
noise venues with random flavor words) are uninformative, while 2-hop
signal nodes carry the community's class flavor word. A model restricted to
1-hop context therefore sits at chance while the full context pipeline can
recover the labels. Signal texts also carry a per-community token, which
transfers nowhere and leaves headroom for fine-tuning on new graphs.
"""

import json
from dataclasses import dataclass

import numpy as np

from tagfm.feature_space import (LABEL_TEXT, META_RELATION, NODE_TEXT,
                                 build_fallback_table, build_meta_relation_texts)
from tagfm.graph_store import EdgeRecord, NodeRecord, TextAttributedGraph
from tagfm.model import DatasetBundle

FLAVORS = ("astronomy", "geology", "robotics", "linguistics")
ALT_FLAVORS = ("stellar", "mineral", "automation", "grammar")


def label_texts(n_classes):
    return [f"research area {FLAVORS[c]}" for c in range(n_classes)]


@dataclass
class SynthSpec:
    kind: str = "hetag"             # "hotag" or "hetag"
    n_communities: int = 40
    targets_per_community: int = 10
    relays_per_community: int = 4
    signals_per_community: int = 3
    n_classes: int = 4
    seed: int = 0
    transfer_style: bool = False    # dilute signal texts, add alt flavor words
    tag_prefix: str = "g"           # community token prefix (unique per graph)


def _mirror(edges):
    out = []
    for e in edges:
        out.append(e)
        out.append(EdgeRecord(e.dst, e.src, e.etype_id, e.text))
    return out


def make_hotag(spec: SynthSpec) -> TextAttributedGraph:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    nodes, edges = [], []

    def add_node(text, label=None):
        nodes.append(NodeRecord(len(nodes), 0, text, label))
        return len(nodes) - 1

    for j in range(spec.n_communities):
        c = j % spec.n_classes
        targets = [add_node(f"document record n{spec.tag_prefix}{j}t{i}", c)
                   for i in range(spec.targets_per_community)]
        relays = [add_node(f"junction node n{spec.tag_prefix}{j}r{i}")
                  for i in range(spec.relays_per_community)]
        signals = [add_node(f"item {FLAVORS[c]} {spec.tag_prefix}{j}")
                   for i in range(spec.signals_per_community)]
        for t in targets:
            for r in rng.choice(relays, size=2, replace=False):
                edges.append(EdgeRecord(t, int(r), 0))
        for r in relays:
            for s in rng.choice(signals, size=min(3, len(signals)), replace=False):
                edges.append(EdgeRecord(r, int(s), 0))
        for a, b in zip(targets, targets[1:]):
            edges.append(EdgeRecord(a, b, 0))
    g = TextAttributedGraph(nodes, _mirror(edges), ["doc"], ["link"],
                            [f"class{c}" for c in range(spec.n_classes)],
                            label_texts(spec.n_classes),
                            undirected_source=True)
    return g


def make_hetag(spec: SynthSpec) -> TextAttributedGraph:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    nodes, edges = [], []
    PAPER, AUTHOR, VENUE = 0, 1, 2
    AUTHORED, MEMBER, TAG = 0, 1, 2

    def add_node(tid, text, label=None):
        nodes.append(NodeRecord(len(nodes), tid, text, label))
        return len(nodes) - 1

    def venue_text(c, j):
        if spec.transfer_style:
            return f"venue {spec.tag_prefix}{j} corpus {FLAVORS[c]} {ALT_FLAVORS[c]}"
        return f"venue {FLAVORS[c]} {spec.tag_prefix}{j}"

    for j in range(spec.n_communities):
        c = j % spec.n_classes
        papers = [add_node(PAPER, f"paper record p{spec.tag_prefix}{j}n{i}", c)
                  for i in range(spec.targets_per_community)]
        authors = [add_node(AUTHOR, f"author profile a{spec.tag_prefix}{j}n{i}")
                   for i in range(spec.relays_per_community)]
        venues = [add_node(VENUE, venue_text(c, j))
                  for _ in range(spec.signals_per_community)]
        for p in papers:
            for a in rng.choice(authors, size=2, replace=False):
                edges.append(EdgeRecord(p, int(a), AUTHORED))
            flavor = FLAVORS[int(rng.integers(spec.n_classes))]
            noise = add_node(VENUE, f"venue {flavor} x{spec.tag_prefix}{j}n{p}")
            edges.append(EdgeRecord(p, noise, TAG))
        for a in authors:
            for v in rng.choice(venues, size=min(2, len(venues)), replace=False):
                edges.append(EdgeRecord(a, int(v), MEMBER))
    g = TextAttributedGraph(nodes, _mirror(edges),
                            ["paper", "author", "venue"],
                            ["authored", "member", "tag"],
                            [f"class{c}" for c in range(spec.n_classes)],
                            label_texts(spec.n_classes),
                            undirected_source=True)
    return g


def make_graph(spec: SynthSpec) -> TextAttributedGraph:
    return make_hotag(spec) if spec.kind == "hotag" else make_hetag(spec)


def make_bundle(dataset_id: str, g: TextAttributedGraph, dim: int,
                embed_seed: int = 0) -> DatasetBundle:
    vocab = build_meta_relation_texts(g)
    node_t = build_fallback_table([n.text for n in g.nodes], dim, embed_seed, NODE_TEXT)
    rel_t = build_fallback_table(vocab.texts, dim, embed_seed, META_RELATION)
    label_t = build_fallback_table(g.label_texts, dim, embed_seed, LABEL_TEXT)
    return DatasetBundle(dataset_id, g, node_t, rel_t, label_t, vocab)


def write_graph_dir(g: TextAttributedGraph, out_dir) -> None:
    """Write the on-disk store (normalized directed form) for CLI tests."""
    from tagfm.graph_store import export_graph
    out_dir.mkdir(parents=True, exist_ok=True)
    export_graph(g, str(out_dir / "nodes.jsonl"), str(out_dir / "edges.jsonl"),
                 str(out_dir / "meta.json"))
