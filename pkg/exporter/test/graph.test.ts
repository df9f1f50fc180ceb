import { describe, expect, it } from "vitest";

import { metaRelationTemplates, readEdges, readMeta, readNodes } from "../src/graph.js";
import { academicFixture, writeFixture } from "./fixtures.js";

function load(paths: ReturnType<typeof academicFixture>) {
  const meta = readMeta(paths.meta);
  const nodes = readNodes(paths.nodes, meta);
  const edges = readEdges(paths.edges, meta, nodes);
  return { meta, nodes, edges };
}

describe("graph readers", () => {
  it("mirrors undirected edges", () => {
    const { edges } = load(academicFixture());
    expect(edges.length).toBe(8);
    expect(edges.filter((e) => e.src === "a1" && e.dst === "p1").length).toBe(1);
  });

  it("rejects dangling endpoints", () => {
    const paths = writeFixture(
      [{ id: "a", type: "t", text: "x", label: null }],
      [{ src: "a", dst: "ghost", type: "r", text: null }],
      { node_types: ["t"], edge_types: ["r"], labels: [], undirected: false });
    const meta = readMeta(paths.meta);
    const nodes = readNodes(paths.nodes, meta);
    expect(() => readEdges(paths.edges, meta, nodes)).toThrow(/dangling/);
  });

  it("rejects duplicate node ids and unknown types", () => {
    const dup = writeFixture(
      [{ id: "a", type: "t", text: "x", label: null },
       { id: "a", type: "t", text: "y", label: null }],
      [], { node_types: ["t"], edge_types: [], labels: [], undirected: false });
    const meta = readMeta(dup.meta);
    expect(() => readNodes(dup.nodes, meta)).toThrow(/duplicate/);
  });
});

describe("meta-relation enumeration", () => {
  it("matches an independent set-based oracle", () => {
    const { nodes, edges } = load(academicFixture());
    const got = metaRelationTemplates(nodes, edges);

    // oracle: distinct signatures via a set over all (mirrored) edges
    const typeOf = new Map(nodes.map((n) => [n.id, n.type]));
    const expected = new Set(
      edges.map((e) => `${typeOf.get(e.src)}|${e.type}|${typeOf.get(e.dst)}`));
    expect(got.length).toBe(expected.size);
    for (const rel of got) {
      expect(expected.has(`${rel.srcType}|${rel.edgeType}|${rel.dstType}`)).toBe(true);
    }
  });

  it("builds the bar-separated template with shared edge text", () => {
    const { nodes, edges } = load(academicFixture());
    const got = metaRelationTemplates(nodes, edges);
    const cites = got.find((r) => r.edgeType === "cites" && r.srcType === "paper"
                                  && r.dstType === "paper");
    expect(cites?.text).toBe("paper || cites || paper || citation link");
    const authored = got.find((r) => r.edgeType === "authored" && r.srcType === "paper");
    expect(authored?.text).toBe("paper || authored || author");
  });

  it("rejects conflicting edge texts within one signature", () => {
    const paths = writeFixture(
      [{ id: "a", type: "t", text: "x", label: null },
       { id: "b", type: "t", text: "y", label: null }],
      [{ src: "a", dst: "b", type: "r", text: "one" },
       { src: "b", dst: "a", type: "r", text: "two" }],
      { node_types: ["t"], edge_types: ["r"], labels: [], undirected: false });
    const meta = readMeta(paths.meta);
    const nodes = readNodes(paths.nodes, meta);
    const edges = readEdges(paths.edges, meta, nodes);
    expect(() => metaRelationTemplates(nodes, edges)).toThrow(/differs/);
  });
});
