"""Unified embedding space: precomputed text vectors plus a hash fallback.

Node texts, meta-relation template texts, and label texts all live in
fixed-dimension tables loaded from one binary format. The fallback embedder
gives deterministic stand-in vectors so the pipeline runs without any
external encoder.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .graph_store import TextAttributedGraph, GraphFormatError

MAGIC = b"H2GV"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIQ")  # magic, version, dim, count

NODE_TEXT = "node_text"
META_RELATION = "meta_relation"
LABEL_TEXT = "label_text"


@dataclass
class EmbeddingTable:
    dim: int
    vectors: np.ndarray            # count x dim
    key_kind: str

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ValueError(f"table shape {self.vectors.shape} does not match dim {self.dim}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table contains non-finite rows")

    def __len__(self):
        return self.vectors.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.vectors[i]

    def astype(self, dtype) -> "EmbeddingTable":
        return EmbeddingTable(self.dim, self.vectors.astype(dtype), self.key_kind)


def require_same_dim(*tables: EmbeddingTable) -> int:
    dims = {t.dim for t in tables}
    if len(dims) != 1:
        raise ValueError(f"embedding tables disagree on dim: {sorted(dims)}")
    return dims.pop()


class MetaRelationVocab:
    """Distinct (source type, edge type, destination type) tuples."""

    def __init__(self):
        self.entries: dict[tuple, tuple] = {}   # tuple -> (id, template text)
        self.texts: list[str] = []

    def add(self, key: tuple, text: str) -> int:
        if key in self.entries:
            return self.entries[key][0]
        rid = len(self.texts)
        self.entries[key] = (rid, text)
        self.texts.append(text)
        return rid

    def id_of(self, src_type: int, etype: int, dst_type: int) -> int:
        return self.entries[(src_type, etype, dst_type)][0]

    def __len__(self):
        return len(self.texts)


def build_meta_relation_texts(g: TextAttributedGraph) -> MetaRelationVocab:
    """Template text per distinct typed edge signature observed in g.

    Template is "src_type || edge_type || dst_type", with the shared edge
    text appended when present. Edge text must be identical within one
    signature; per-edge unique texts are unsupported.
    """
    vocab = MetaRelationVocab()
    shared_text: dict[tuple, str | None] = {}
    for e in g.edges:
        key = (g.nodes[e.src].type_id, e.etype_id, g.nodes[e.dst].type_id)
        if key in shared_text:
            if (e.text or None) != shared_text[key]:
                raise GraphFormatError(
                    f"edge text differs within meta-relation {key}; shared text required")
            continue
        shared_text[key] = e.text or None
        parts = [g.node_type_names[key[0]], g.edge_type_names[key[1]],
                 g.node_type_names[key[2]]]
        if e.text:
            parts.append(e.text)
        vocab.add(key, " || ".join(parts))
    return vocab


def relation_ids_per_slot(g: TextAttributedGraph, vocab: MetaRelationVocab) -> np.ndarray:
    """Meta-relation id for every CSR adjacency slot, aligned with adj_dst."""
    node_types = np.fromiter((n.type_id for n in g.nodes), dtype=np.int64, count=g.n_nodes)
    src_of_slot = np.repeat(np.arange(g.n_nodes), np.diff(g.adj_offsets))
    out = np.empty(len(g.adj_dst), dtype=np.int64)
    for i in range(len(out)):
        key = (int(node_types[src_of_slot[i]]), int(g.adj_etype[i]),
               int(node_types[g.adj_dst[i]]))
        out[i] = vocab.id_of(*key)
    return out


# ---------------------------------------------------------------------------
# binary vector format
# ---------------------------------------------------------------------------

def save_embeddings(path: str, vectors: np.ndarray) -> None:
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError("expected a count x dim matrix")
    count, dim = vectors.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, dim, count))
        fh.write(vectors.tobytes())


def load_embeddings(path: str, expected_count: int, expected_dim: int,
                    key_kind: str = NODE_TEXT) -> EmbeddingTable:
    """Read a binary vector file, validating header and payload."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, dim, count = HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if dim != expected_dim:
            raise ValueError(f"{path}: dimension mismatch (file {dim}, expected {expected_dim})")
        if count != expected_count:
            raise ValueError(f"{path}: count mismatch (file {count}, expected {expected_count})")
        payload = fh.read(4 * dim * count)
    if len(payload) != 4 * dim * count:
        raise ValueError(f"{path}: truncated payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    bad = np.where(~np.isfinite(vectors).all(axis=1))[0]
    if bad.size:
        raise ValueError(f"{path}: non-finite values in row {int(bad[0])}")
    return EmbeddingTable(dim, vectors, key_kind)


# ---------------------------------------------------------------------------
# fallback embedder
# ---------------------------------------------------------------------------

def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    h = hashlib.blake2b(f"{seed}\x1f{token}".encode("utf-8"), digest_size=8)
    key = int.from_bytes(h.digest(), "little")
    rng = np.random.Generator(np.random.PCG64(key))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def fallback_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic hash embedding: average of per-token unit vectors.

    Identical text gives a bitwise-identical vector; empty text gives zeros.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    tokens = text.split()
    if not tokens:
        return np.zeros(dim, dtype=np.float32)
    acc = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        acc += _token_vector(tok, dim, seed)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc /= norm
    return acc.astype(np.float32)


def build_fallback_table(texts, dim: int, seed: int = 0,
                         key_kind: str = NODE_TEXT) -> EmbeddingTable:
    rows = np.stack([fallback_embed(t, dim, seed) for t in texts]) if texts \
        else np.zeros((0, dim), dtype=np.float32)
    return EmbeddingTable(dim, rows, key_kind)
