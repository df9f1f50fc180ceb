/**
 * Readers for the graph store's on-disk schema (nodes.jsonl, edges.jsonl,
 * meta.json) plus meta-relation template enumeration.
 *
 * Undirected graphs are mirrored here exactly as the ingester mirrors
 * them, so the enumerated relation vocabulary lines up with the consumer's.
 */

import { readFileSync } from "node:fs";

export interface GraphMeta {
  node_types: string[];
  edge_types: string[];
  labels: { name: string; text: string }[];
  undirected: boolean;
}

export interface NodeLine {
  id: string;
  type: string;
  text: string;
  label: string | null;
}

export interface EdgeLine {
  src: string;
  dst: string;
  type: string;
  text: string | null;
}

export interface MetaRelation {
  srcType: string;
  edgeType: string;
  dstType: string;
  text: string;
}

function readJsonl<T>(path: string): T[] {
  const out: T[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    try {
      out.push(JSON.parse(line) as T);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: malformed line`);
    }
  }
  return out;
}

export function normalizeText(text: string): string {
  return text.split(/\s+/).filter(Boolean).join(" ");
}

export function readMeta(path: string): GraphMeta {
  const raw = JSON.parse(readFileSync(path, "utf-8"));
  return {
    node_types: raw.node_types,
    edge_types: raw.edge_types,
    labels: raw.labels ?? [],
    undirected: Boolean(raw.undirected),
  };
}

export function readNodes(path: string, meta: GraphMeta): NodeLine[] {
  const known = new Set(meta.node_types);
  const seen = new Set<string>();
  const nodes = readJsonl<NodeLine>(path);
  for (const n of nodes) {
    if (seen.has(n.id)) throw new Error(`duplicate node id ${n.id}`);
    seen.add(n.id);
    if (!known.has(n.type)) throw new Error(`unknown node type ${n.type}`);
    n.text = normalizeText(n.text);
    if (!n.text) throw new Error(`node ${n.id}: empty text`);
  }
  return nodes;
}

export function readEdges(path: string, meta: GraphMeta,
                          nodes: NodeLine[]): EdgeLine[] {
  const ids = new Set(nodes.map((n) => n.id));
  const known = new Set(meta.edge_types);
  const edges = readJsonl<EdgeLine>(path);
  const out: EdgeLine[] = [];
  for (const e of edges) {
    if (!ids.has(e.src) || !ids.has(e.dst)) {
      throw new Error(`dangling endpoint ${ids.has(e.src) ? e.dst : e.src}`);
    }
    if (!known.has(e.type)) throw new Error(`unknown edge type ${e.type}`);
    out.push(e);
    if (meta.undirected && e.src !== e.dst) {
      out.push({ src: e.dst, dst: e.src, type: e.type, text: e.text });
    }
  }
  return out;
}

/**
 * Distinct (source type, edge type, destination type) signatures in
 * first-appearance order, each with its template text
 * "src || edge || dst" plus the shared edge text when present.
 */
export function metaRelationTemplates(nodes: NodeLine[], edges: EdgeLine[]): MetaRelation[] {
  const typeOf = new Map(nodes.map((n) => [n.id, n.type]));
  const seen = new Map<string, string | null>();
  const out: MetaRelation[] = [];
  for (const e of edges) {
    const srcType = typeOf.get(e.src)!;
    const dstType = typeOf.get(e.dst)!;
    const key = `${srcType}${e.type}${dstType}`;
    const text = e.text ?? null;
    if (seen.has(key)) {
      if (seen.get(key) !== text) {
        throw new Error(`edge text differs within meta-relation ${key}`);
      }
      continue;
    }
    seen.set(key, text);
    const parts = [srcType, e.type, dstType];
    if (text) parts.push(text);
    out.push({ srcType, edgeType: e.type, dstType, text: parts.join(" || ") });
  }
  return out;
}
