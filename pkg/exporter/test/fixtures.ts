import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface FixturePaths {
  dir: string;
  nodes: string;
  edges: string;
  meta: string;
}

export function writeFixture(nodes: object[], edges: object[], meta: object): FixturePaths {
  const dir = mkdtempSync(join(tmpdir(), "embed-export-"));
  const paths = {
    dir,
    nodes: join(dir, "nodes.jsonl"),
    edges: join(dir, "edges.jsonl"),
    meta: join(dir, "meta.json"),
  };
  writeFileSync(paths.nodes, nodes.map((n) => JSON.stringify(n)).join("\n") + "\n");
  writeFileSync(paths.edges, edges.map((e) => JSON.stringify(e)).join("\n") + "\n");
  writeFileSync(paths.meta, JSON.stringify(meta));
  return paths;
}

export function academicFixture(): FixturePaths {
  const nodes = [
    { id: "p1", type: "paper", text: "paper about stars", label: "astro" },
    { id: "p2", type: "paper", text: "paper about rocks", label: "geo" },
    { id: "a1", type: "author", text: "author profile one", label: null },
    { id: "v1", type: "venue", text: "venue astronomy weekly", label: null },
  ];
  const edges = [
    { src: "p1", dst: "a1", type: "authored", text: null },
    { src: "p2", dst: "a1", type: "authored", text: null },
    { src: "a1", dst: "v1", type: "member", text: null },
    { src: "p1", dst: "p2", type: "cites", text: "citation link" },
  ];
  const meta = {
    node_types: ["paper", "author", "venue"],
    edge_types: ["authored", "member", "cites"],
    labels: [
      { name: "astro", text: "research area astronomy" },
      { name: "geo", text: "research area geology" },
    ],
    undirected: true,
  };
  return writeFixture(nodes, edges, meta);
}
