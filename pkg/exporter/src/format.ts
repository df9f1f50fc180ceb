/**
 * Binary vector file format ("H2GV"): magic, u32 version=1, u32 dim,
 * u64 count, then count*dim little-endian f32 values.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "H2GV";
export const FORMAT_VERSION = 1;
export const HEADER_BYTES = 20;

export function encodeVectors(vectors: Float32Array[], dim: number): Buffer {
  for (const [i, v] of vectors.entries()) {
    if (v.length !== dim) {
      throw new Error(`row ${i} has dimension ${v.length}, expected ${dim}`);
    }
  }
  const header = Buffer.alloc(HEADER_BYTES);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(dim, 8);
  header.writeBigUInt64LE(BigInt(vectors.length), 12);
  const payload = Buffer.alloc(vectors.length * dim * 4);
  for (let r = 0; r < vectors.length; r++) {
    for (let c = 0; c < dim; c++) {
      payload.writeFloatLE(vectors[r][c], (r * dim + c) * 4);
    }
  }
  return Buffer.concat([header, payload]);
}

export function writeVectors(path: string, vectors: Float32Array[], dim: number): void {
  writeFileSync(path, encodeVectors(vectors, dim));
}

export interface VectorFile {
  dim: number;
  count: number;
  rows: Float32Array[];
}

export function readVectors(path: string): VectorFile {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${path}: truncated header`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new Error(`${path}: unsupported version ${version}`);
  }
  const dim = buf.readUInt32LE(8);
  const count = Number(buf.readBigUInt64LE(12));
  const expected = HEADER_BYTES + count * dim * 4;
  if (buf.length !== expected) {
    throw new Error(`${path}: payload size ${buf.length} != ${expected}`);
  }
  const rows: Float32Array[] = [];
  for (let r = 0; r < count; r++) {
    const row = new Float32Array(dim);
    for (let c = 0; c < dim; c++) {
      row[c] = buf.readFloatLE(HEADER_BYTES + (r * dim + c) * 4);
    }
    rows.push(row);
  }
  return { dim, count, rows };
}
