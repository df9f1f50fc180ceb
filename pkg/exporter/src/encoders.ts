/**
 * Sentence encoders, pluggable by name.
 *
 * "hash" is the default: a dependency-free deterministic embedder (per-token
 * seeded gaussian unit vectors, averaged and normalized) that produces
 * stable vectors on any machine. Real neural encoders can be registered
 * under new names; the export pipeline only needs encode() and dim.
 */

import { createHash } from "node:crypto";

export interface SentenceEncoder {
  readonly name: string;
  readonly dim: number;
  encode(texts: string[]): Promise<Float32Array[]>;
}

const MASK = (1n << 64n) - 1n;

function splitmix64(state: bigint): [bigint, bigint] {
  state = (state + 0x9e3779b97f4a7c15n) & MASK;
  let z = state;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
  return [z ^ (z >> 31n), state];
}

function tokenKey(token: string, seed: number): bigint {
  const digest = createHash("sha256").update(`${seed}${token}`).digest();
  return digest.readBigUInt64LE(0);
}

/** Standard-normal samples from a splitmix64 stream via Box-Muller. */
function gaussianVector(key: bigint, dim: number): Float64Array {
  const out = new Float64Array(dim);
  let state = key;
  let i = 0;
  while (i < dim) {
    let u1: number, u2: number, bits: bigint;
    [bits, state] = splitmix64(state);
    u1 = Number(bits >> 11n) * 2 ** -53;
    [bits, state] = splitmix64(state);
    u2 = Number(bits >> 11n) * 2 ** -53;
    if (u1 <= 0) u1 = 2 ** -53;
    const r = Math.sqrt(-2.0 * Math.log(u1));
    out[i++] = r * Math.cos(2.0 * Math.PI * u2);
    if (i < dim) out[i++] = r * Math.sin(2.0 * Math.PI * u2);
  }
  return out;
}

export class HashEncoder implements SentenceEncoder {
  readonly name: string;
  readonly dim: number;
  private readonly seed: number;

  constructor(dim: number, seed = 0) {
    if (dim <= 0) throw new Error("dim must be positive");
    this.name = "hash";
    this.dim = dim;
    this.seed = seed;
  }

  private embedOne(text: string): Float32Array {
    const tokens = text.split(/\s+/).filter(Boolean);
    const acc = new Float64Array(this.dim);
    if (tokens.length === 0) return new Float32Array(this.dim);
    for (const tok of tokens) {
      const v = gaussianVector(tokenKey(tok, this.seed), this.dim);
      let norm = 0;
      for (let i = 0; i < this.dim; i++) norm += v[i] * v[i];
      norm = Math.sqrt(norm);
      for (let i = 0; i < this.dim; i++) acc[i] += v[i] / norm;
    }
    let norm = 0;
    for (let i = 0; i < this.dim; i++) {
      acc[i] /= tokens.length;
      norm += acc[i] * acc[i];
    }
    norm = Math.sqrt(norm);
    const out = new Float32Array(this.dim);
    for (let i = 0; i < this.dim; i++) {
      out[i] = norm > 0 ? acc[i] / norm : 0;
    }
    return out;
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    return texts.map((t) => this.embedOne(t));
  }
}

export function loadEncoder(name: string, dim: number, seed = 0): SentenceEncoder {
  if (name === "hash") {
    return new HashEncoder(dim, seed);
  }
  throw new Error(`encoder load failure: unknown encoder ${JSON.stringify(name)}`);
}
