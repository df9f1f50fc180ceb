import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { HashEncoder, loadEncoder } from "../src/encoders.js";
import { exportEmbeddings } from "../src/export.js";
import { readVectors } from "../src/format.js";
import { metaRelationTemplates, readEdges, readMeta, readNodes } from "../src/graph.js";
import { academicFixture } from "./fixtures.js";

const DIM = 48;

async function runExport(outDir?: string) {
  const paths = academicFixture();
  const dir = outDir ?? mkdtempSync(join(tmpdir(), "export-out-"));
  const manifest = await exportEmbeddings({
    nodesPath: paths.nodes,
    edgesPath: paths.edges,
    metaPath: paths.meta,
    encoder: new HashEncoder(DIM, 0),
    dim: DIM,
    outDir: dir,
  });
  return { paths, dir, manifest };
}

describe("hash encoder", () => {
  it("is deterministic and unit norm", async () => {
    const enc = new HashEncoder(32, 7);
    const [a] = await enc.encode(["graph learning at scale"]);
    const [b] = await enc.encode(["graph learning at scale"]);
    expect(Array.from(a)).toEqual(Array.from(b));
    const norm = Math.sqrt(a.reduce((s, x) => s + x * x, 0));
    expect(Math.abs(norm - 1)).toBeLessThan(1e-6);
  });

  it("embeds empty text as zeros", async () => {
    const enc = new HashEncoder(8, 0);
    const [v] = await enc.encode(["   "]);
    expect(Array.from(v)).toEqual(new Array(8).fill(0));
  });

  it("unknown encoder names fail to load", () => {
    expect(() => loadEncoder("bert-gigantic", 384)).toThrow(/encoder load failure/);
  });
});

describe("export pipeline", () => {
  it("writes three vector files with matching counts", async () => {
    const { paths, dir, manifest } = await runExport();
    const meta = readMeta(paths.meta);
    const nodes = readNodes(paths.nodes, meta);
    const edges = readEdges(paths.edges, meta, nodes);
    expect(manifest.counts["nodes.vec"]).toBe(nodes.length);
    expect(manifest.counts["labels.vec"]).toBe(meta.labels.length);
    // meta-relation count equals the distinct-signature oracle
    expect(manifest.counts["relations.vec"]).toBe(
      metaRelationTemplates(nodes, edges).length);
    for (const name of ["nodes.vec", "relations.vec", "labels.vec"]) {
      const file = readVectors(join(dir, name));
      expect(file.dim).toBe(DIM);
      expect(file.count).toBe(manifest.counts[name]);
    }
  });

  it("payload arithmetic: count x dim x 4 bytes after the header", async () => {
    const { dir, manifest } = await runExport();
    const raw = readFileSync(join(dir, "nodes.vec"));
    expect(raw.length).toBe(20 + manifest.counts["nodes.vec"] * DIM * 4);
  });

  it("reruns produce identical checksums", async () => {
    const a = await runExport();
    const b = await runExport();
    expect(a.manifest.checksums).toEqual(b.manifest.checksums);
  });

  it("rejects a dimension mismatch with the requested size", async () => {
    const paths = academicFixture();
    await expect(exportEmbeddings({
      nodesPath: paths.nodes,
      edgesPath: paths.edges,
      metaPath: paths.meta,
      encoder: new HashEncoder(16, 0),
      dim: 48,
      outDir: mkdtempSync(join(tmpdir(), "export-bad-")),
    })).rejects.toThrow(/dimension mismatch/);
  });

  it("output loads through the consumer's embedding loader", async () => {
    const probe = spawnSync("python3", ["-c", "import tagfm"], { encoding: "utf-8" });
    if (probe.status !== 0) {
      console.warn("tagfm not importable; skipping cross-component golden test");
      return;
    }
    const { dir, manifest } = await runExport();
    const script = `
import json, sys
from tagfm.feature_space import load_embeddings
manifest = json.load(open(sys.argv[1]))
base = sys.argv[2]
for name in ("nodes.vec", "relations.vec", "labels.vec"):
    t = load_embeddings(f"{base}/{name}", manifest["counts"][name], manifest["dim"])
    assert len(t) == manifest["counts"][name]
    assert t.dim == manifest["dim"]
print("ok")
`;
    const res = spawnSync("python3", ["-c", script, join(dir, "manifest.json"), dir],
                          { encoding: "utf-8" });
    expect(res.stderr).toBe("");
    expect(res.stdout.trim()).toBe("ok");
  });
});
