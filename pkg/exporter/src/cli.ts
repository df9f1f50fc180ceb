#!/usr/bin/env node
/**
 * Command line: encode a graph store's texts and write H2GV vector files.
 *
 *   tagfm-embed-export --nodes nodes.jsonl --edges edges.jsonl \
 *     --meta meta.json --out embdir [--encoder hash] [--dim 384] [--seed 0]
 */

import { loadEncoder } from "./encoders.js";
import { exportEmbeddings } from "./export.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${arg}`);
    out.set(arg.slice(2), value);
    i++;
  }
  return out;
}

export async function main(argv: string[]): Promise<number> {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
    for (const required of ["nodes", "edges", "meta", "out"]) {
      if (!args.has(required)) throw new Error(`--${required} is required`);
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const dim = Number(args.get("dim") ?? "384");
  const seed = Number(args.get("seed") ?? "0");
  const encoderName = args.get("encoder") ?? "hash";
  try {
    const encoder = loadEncoder(encoderName, dim, seed);
    const manifest = await exportEmbeddings({
      nodesPath: args.get("nodes")!,
      edgesPath: args.get("edges")!,
      metaPath: args.get("meta")!,
      encoder,
      dim,
      outDir: args.get("out")!,
    });
    console.log(JSON.stringify({ dim: manifest.dim, counts: manifest.counts }));
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js")
  || process.argv[1]?.endsWith("tagfm-embed-export");
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
