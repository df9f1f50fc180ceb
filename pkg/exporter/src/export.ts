/**
 * Export pipeline: read a graph store, encode node / meta-relation / label
 * texts, and write the three H2GV vector files plus a manifest.
 */

import { createHash } from "node:crypto";
import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { SentenceEncoder } from "./encoders.js";
import { encodeVectors } from "./format.js";
import { metaRelationTemplates, readEdges, readMeta, readNodes } from "./graph.js";

export interface ExportOptions {
  nodesPath: string;
  edgesPath: string;
  metaPath: string;
  encoder: SentenceEncoder;
  dim: number;
  outDir: string;
}

export interface ExportManifest {
  inputs: { nodes: string; edges: string; meta: string };
  encoder: string;
  dim: number;
  counts: Record<string, number>;
  checksums: Record<string, string>;
}

export async function exportEmbeddings(opts: ExportOptions): Promise<ExportManifest> {
  if (opts.encoder.dim !== opts.dim) {
    throw new Error(
      `dimension mismatch: encoder ${opts.encoder.name} produces ` +
      `${opts.encoder.dim}, requested ${opts.dim}`);
  }
  const meta = readMeta(opts.metaPath);
  const nodes = readNodes(opts.nodesPath, meta);
  const edges = readEdges(opts.edgesPath, meta, nodes);
  const relations = metaRelationTemplates(nodes, edges);

  const groups: [string, string[]][] = [
    ["nodes.vec", nodes.map((n) => n.text)],
    ["relations.vec", relations.map((r) => r.text)],
    ["labels.vec", meta.labels.map((l) => l.text)],
  ];

  mkdirSync(opts.outDir, { recursive: true });
  const counts: Record<string, number> = {};
  const checksums: Record<string, string> = {};
  for (const [name, texts] of groups) {
    const vectors = await opts.encoder.encode(texts);
    for (const [i, v] of vectors.entries()) {
      if (v.length !== opts.dim) {
        throw new Error(`dimension mismatch in ${name} row ${i}: ` +
                        `${v.length} != ${opts.dim}`);
      }
    }
    const blob = encodeVectors(vectors, opts.dim);
    writeFileSync(join(opts.outDir, name), blob);
    counts[name] = vectors.length;
    checksums[name] = createHash("sha256").update(blob).digest("hex");
  }

  const manifest: ExportManifest = {
    inputs: { nodes: opts.nodesPath, edges: opts.edgesPath, meta: opts.metaPath },
    encoder: opts.encoder.name,
    dim: opts.dim,
    counts,
    checksums,
  };
  writeFileSync(join(opts.outDir, "manifest.json"),
                JSON.stringify(manifest, null, 2) + "\n");
  return manifest;
}
