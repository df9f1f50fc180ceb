"""Typed text-attributed graph: ingestion, adjacency, and task splits.

Graphs are immutable after ingestion. Nodes and edges arrive as JSON-lines
files plus a meta.json declaring the type vocabularies; node ids are
densified at ingest and the original string ids kept in a sidecar map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

NC = "NC"
LP = "LP"


class GraphFormatError(ValueError):
    """Raised for malformed or inconsistent on-disk graph data."""


@dataclass
class NodeRecord:
    node_id: int
    type_id: int
    text: str
    label_id: int | None = None


@dataclass
class EdgeRecord:
    src: int
    dst: int
    etype_id: int
    text: str | None = None


class TextAttributedGraph:
    """Typed nodes and directed edges with CSR outgoing adjacency."""

    def __init__(self, nodes, edges, node_type_names, edge_type_names,
                 label_names=None, label_texts=None, orig_ids=None,
                 undirected_source: bool = False):
        self.nodes: list[NodeRecord] = list(nodes)
        self.edges: list[EdgeRecord] = list(edges)
        self.node_type_names = list(node_type_names)
        self.edge_type_names = list(edge_type_names)
        self.label_names = list(label_names or [])
        self.label_texts = list(label_texts or [])
        self.orig_ids = list(orig_ids) if orig_ids is not None else [str(n.node_id) for n in self.nodes]
        self.undirected_source = undirected_source
        self._validate()
        self._build_adjacency()

    def _validate(self):
        n = len(self.nodes)
        for i, rec in enumerate(self.nodes):
            if rec.node_id != i:
                raise GraphFormatError(f"node ids not dense: position {i} holds id {rec.node_id}")
            if not (0 <= rec.type_id < len(self.node_type_names)):
                raise GraphFormatError(f"node {i}: type id {rec.type_id} out of range")
            if not rec.text:
                raise GraphFormatError(f"node {i}: empty text")
            if rec.label_id is not None and not (0 <= rec.label_id < len(self.label_texts)):
                raise GraphFormatError(f"node {i}: label id {rec.label_id} out of range")
        for j, e in enumerate(self.edges):
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise GraphFormatError(f"edge {j}: dangling endpoint ({e.src}, {e.dst})")
            if not (0 <= e.etype_id < len(self.edge_type_names)):
                raise GraphFormatError(f"edge {j}: edge type id {e.etype_id} out of range")
        if len(self.label_names) != len(self.label_texts):
            raise GraphFormatError("label names and label texts differ in length")

    def _build_adjacency(self):
        n = len(self.nodes)
        m = len(self.edges)
        src = np.fromiter((e.src for e in self.edges), dtype=np.int64, count=m)
        order = np.argsort(src, kind="stable")
        self.adj_dst = np.fromiter((self.edges[int(i)].dst for i in order), dtype=np.int64, count=m)
        self.adj_etype = np.fromiter((self.edges[int(i)].etype_id for i in order), dtype=np.int64, count=m)
        counts = np.bincount(src, minlength=n)
        self.adj_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=self.adj_offsets[1:])
        self.out_degree = counts.astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def kind(self) -> str:
        single = len(self.node_type_names) == 1 and len(self.edge_type_names) == 1
        return "HoTAG" if single else "HeTAG"

    def out_neighbors(self, u: int):
        """(dst ids, edge type ids) of u's outgoing edges."""
        lo, hi = self.adj_offsets[u], self.adj_offsets[u + 1]
        return self.adj_dst[lo:hi], self.adj_etype[lo:hi]

    def neighbor_set(self, u: int) -> set:
        lo, hi = self.adj_offsets[u], self.adj_offsets[u + 1]
        return set(int(x) for x in self.adj_dst[lo:hi])

    def labeled_nodes(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.label_id is not None]

    def edge_set(self) -> set:
        return {(e.src, e.dst) for e in self.edges}


@dataclass
class SplitSet:
    """Train/valid/test bindings for one task on one graph."""

    task: str                      # NC or LP
    train: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)
    negatives: dict = field(default_factory=dict)  # LP only: split -> pair list
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)

    def split(self, name: str):
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]


# ---------------------------------------------------------------------------
# ingestion / export
# ---------------------------------------------------------------------------

def _read_jsonl(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraphFormatError(f"{path}:{lineno}: malformed line ({exc.msg})") from exc


def ingest_graph(nodes_path: str, edges_path: str, meta_path: str) -> TextAttributedGraph:
    """Build a validated graph from nodes.jsonl, edges.jsonl and meta.json."""
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    node_types = list(meta["node_types"])
    edge_types = list(meta["edge_types"])
    labels = meta.get("labels", [])
    label_names = [l["name"] for l in labels]
    label_texts = [l["text"] for l in labels]
    undirected = bool(meta.get("undirected", False))
    ntype_index = {t: i for i, t in enumerate(node_types)}
    etype_index = {t: i for i, t in enumerate(edge_types)}
    label_index = {n: i for i, n in enumerate(label_names)}

    nodes: list[NodeRecord] = []
    orig_ids: list[str] = []
    id_map: dict[str, int] = {}
    for lineno, rec in _read_jsonl(nodes_path):
        try:
            oid, tname, text = str(rec["id"]), rec["type"], rec["text"]
        except (KeyError, TypeError) as exc:
            raise GraphFormatError(f"{nodes_path}:{lineno}: missing node field") from exc
        if oid in id_map:
            raise GraphFormatError(f"{nodes_path}:{lineno}: duplicate node id {oid!r}")
        if tname not in ntype_index:
            raise GraphFormatError(f"{nodes_path}:{lineno}: unknown node type {tname!r}")
        text = " ".join(str(text).split())
        if not text:
            raise GraphFormatError(f"{nodes_path}:{lineno}: empty node text")
        label = rec.get("label")
        if label is not None and label not in label_index:
            raise GraphFormatError(f"{nodes_path}:{lineno}: unknown label {label!r}")
        dense = len(nodes)
        id_map[oid] = dense
        orig_ids.append(oid)
        nodes.append(NodeRecord(dense, ntype_index[tname], text,
                                None if label is None else label_index[label]))

    edges: list[EdgeRecord] = []
    for lineno, rec in _read_jsonl(edges_path):
        try:
            s, d, tname = str(rec["src"]), str(rec["dst"]), rec["type"]
        except (KeyError, TypeError) as exc:
            raise GraphFormatError(f"{edges_path}:{lineno}: missing edge field") from exc
        if s not in id_map or d not in id_map:
            missing = s if s not in id_map else d
            raise GraphFormatError(f"{edges_path}:{lineno}: dangling endpoint {missing!r}")
        if tname not in etype_index:
            raise GraphFormatError(f"{edges_path}:{lineno}: unknown edge type {tname!r}")
        text = rec.get("text")
        edges.append(EdgeRecord(id_map[s], id_map[d], etype_index[tname], text))
        if undirected and id_map[s] != id_map[d]:
            edges.append(EdgeRecord(id_map[d], id_map[s], etype_index[tname], text))

    return TextAttributedGraph(nodes, edges, node_types, edge_types,
                               label_names, label_texts, orig_ids,
                               undirected_source=undirected)


def export_graph(g: TextAttributedGraph, nodes_path: str, edges_path: str,
                 meta_path: str) -> None:
    """Write the materialized graph back to the on-disk schema.

    Mirrored edges are written explicitly, so the exported meta always says
    undirected=false and a re-ingest reproduces the graph field by field.
    """
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({
            "node_types": g.node_type_names,
            "edge_types": g.edge_type_names,
            "labels": [{"name": n, "text": t}
                       for n, t in zip(g.label_names, g.label_texts)],
            "undirected": False,
        }, fh, indent=2)
        fh.write("\n")
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for rec in g.nodes:
            fh.write(json.dumps({
                "id": g.orig_ids[rec.node_id],
                "type": g.node_type_names[rec.type_id],
                "text": rec.text,
                "label": None if rec.label_id is None else g.label_names[rec.label_id],
            }) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for e in g.edges:
            fh.write(json.dumps({
                "src": g.orig_ids[e.src],
                "dst": g.orig_ids[e.dst],
                "type": g.edge_type_names[e.etype_id],
                "text": e.text,
            }) + "\n")


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def _partition(items: list, ratios, rng) -> tuple:
    order = rng.permutation(len(items))
    n_train = int(len(items) * ratios[0])
    n_valid = int(len(items) * ratios[1])
    train = [items[i] for i in order[:n_train]]
    valid = [items[i] for i in order[n_train:n_train + n_valid]]
    test = [items[i] for i in order[n_train + n_valid:]]
    return train, valid, test


def _cap(items: list, cap, rng) -> list:
    if cap is None or len(items) <= cap:
        return items
    keep = rng.choice(len(items), size=cap, replace=False)
    return [items[i] for i in sorted(keep)]


def build_nc_splits(g: TextAttributedGraph, ratios=(0.8, 0.1, 0.1), seed: int = 0,
                    cap_train=None, cap_eval=None) -> SplitSet:
    """Seeded shuffle of labeled nodes into train/valid/test."""
    labeled = g.labeled_nodes()
    if not labeled:
        raise ValueError("graph has no labeled nodes")
    rng = np.random.Generator(np.random.PCG64(seed))
    train, valid, test = _partition(labeled, ratios, rng)
    return SplitSet(NC, _cap(train, cap_train, rng), _cap(valid, cap_eval, rng),
                    _cap(test, cap_eval, rng), {}, seed, tuple(ratios))


def _undirected_units(g: TextAttributedGraph) -> list:
    if not g.undirected_source:
        return [(e.src, e.dst) for e in g.edges]
    seen = set()
    units = []
    for e in g.edges:
        key = (min(e.src, e.dst), max(e.src, e.dst))
        if key not in seen:
            seen.add(key)
            units.append(key)
    return units


def build_lp_splits(g: TextAttributedGraph, ratios=(0.8, 0.1, 0.1), seed: int = 0,
                    cap_train=None, cap_eval=None) -> SplitSet:
    """Shuffle edges by seed into 80/10/10 and attach 1:1 negatives.

    Undirected-source graphs are split on canonical undirected pairs so a
    mirrored edge can never leak across splits. Negatives are fixed here, at
    build time, one per positive.
    """
    if g.n_edges < 10:
        raise ValueError("link-prediction splits need at least 10 edges")
    rng = np.random.Generator(np.random.PCG64(seed))
    units = _undirected_units(g)
    train, valid, test = _partition(units, ratios, rng)
    train = _cap(train, cap_train, rng)
    valid = _cap(valid, cap_eval, rng)
    test = _cap(test, cap_eval, rng)
    from .config import derive_seed
    negatives = {
        name: sample_lp_negatives(g, pairs, derive_seed(seed, "lp-neg", name))
        for name, pairs in (("train", train), ("valid", valid), ("test", test))
    }
    return SplitSet(LP, train, valid, test, negatives, seed, tuple(ratios))


def lp_train_subgraph(g: TextAttributedGraph, split: SplitSet) -> TextAttributedGraph:
    """Graph restricted to training edges: no valid/test positive survives."""
    banned = set()
    for pair in list(split.valid) + list(split.test):
        u, v = int(pair[0]), int(pair[1])
        banned.add((u, v))
        if g.undirected_source:
            banned.add((v, u))
    kept = [e for e in g.edges if (e.src, e.dst) not in banned]
    return TextAttributedGraph(g.nodes, kept, g.node_type_names, g.edge_type_names,
                               g.label_names, g.label_texts, g.orig_ids,
                               undirected_source=g.undirected_source)


def _two_hop(g: TextAttributedGraph, u: int) -> set:
    first = g.neighbor_set(u)
    out = set()
    for w in first:
        out |= g.neighbor_set(w)
    out -= first
    out.discard(u)
    return out


def sample_lp_negatives(g: TextAttributedGraph, positives, seed: int = 0) -> list:
    """One negative (u, w) per positive (u, v), preferring 2-hop partners.

    w is a 2-hop neighbor of u that is neither v nor linked to u; if u has no
    eligible 2-hop neighbor, w falls back to a seeded uniform non-neighbor.
    """
    if g.n_nodes < 2:
        raise ValueError("cannot sample negative: graph has a single node")
    rng = np.random.Generator(np.random.PCG64(seed))
    edge_partners: dict[int, set] = {}
    out = []
    for pair in positives:
        u, v = int(pair[0]), int(pair[1])
        if u not in edge_partners:
            edge_partners[u] = g.neighbor_set(u)
        linked = edge_partners[u]
        eligible = sorted(w for w in _two_hop(g, u) if w != v and w not in linked)
        if not eligible:
            pool = [w for w in range(g.n_nodes) if w != u and w != v and w not in linked]
            if not pool:
                raise ValueError(f"cannot sample negative for node {u}")
            eligible = pool
        out.append((u, int(eligible[rng.integers(len(eligible))])))
    return out


# ---------------------------------------------------------------------------
# splits.json
# ---------------------------------------------------------------------------

def save_splits(split: SplitSet, path: str, config_hash: str = "") -> None:
    payload = {
        "task": split.task,
        "seed": split.seed,
        "ratios": list(split.ratios),
        "train": [list(p) if isinstance(p, (tuple, list)) else p for p in split.train],
        "valid": [list(p) if isinstance(p, (tuple, list)) else p for p in split.valid],
        "test": [list(p) if isinstance(p, (tuple, list)) else p for p in split.test],
        "negatives": {k: [list(p) for p in v] for k, v in split.negatives.items()},
        "config_hash": config_hash,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_splits(path: str) -> SplitSet:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    def fix(items):
        return [tuple(p) if isinstance(p, list) else p for p in items]
    return SplitSet(data["task"], fix(data["train"]), fix(data["valid"]), fix(data["test"]),
                    {k: [tuple(p) for p in v] for k, v in data.get("negatives", {}).items()},
                    data.get("seed", 0), tuple(data.get("ratios", (0.8, 0.1, 0.1))))
