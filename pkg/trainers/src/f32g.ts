/**
 * Portable grid formats shared with the evaluation toolkit.
 *
 * .f32g:  magic "F32G" | u32 version=1 | u32 height | u32 width | float32[h*w]
 * .maskg: same layout, magic "MSKG", payload restricted to {0.0, 1.0}
 * All integers and floats little-endian, pixels row-major.
 *
 * Manifests are UTF-8 text: one `image[\t mask]` relative path per line,
 * `#` comments, order is the canonical iteration order.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface Slice {
  height: number;
  width: number;
  pixels: Float32Array; // row-major, length height*width
}

const HEADER_BYTES = 16;
const VERSION = 1;

function encode(magic: string, slice: Slice): Buffer {
  const { height, width, pixels } = slice;
  if (pixels.length !== height * width) {
    throw new Error(`pixel count ${pixels.length} != ${height}x${width}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * pixels.length);
  buf.write(magic, 0, 4, "ascii");
  buf.writeUInt32LE(VERSION, 4);
  buf.writeUInt32LE(height, 8);
  buf.writeUInt32LE(width, 12);
  for (let i = 0; i < pixels.length; i++) {
    buf.writeFloatLE(pixels[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

function decode(magic: string, buf: Buffer, source: string): Slice {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${source}: shorter than the 16-byte header`);
  }
  const got = buf.toString("ascii", 0, 4);
  if (got !== magic) {
    throw new Error(`${source}: expected magic ${magic}, found ${got}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`${source}: unsupported version ${version}`);
  }
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  const expected = HEADER_BYTES + 4 * height * width;
  if (height < 1 || width < 1 || buf.length !== expected) {
    throw new Error(`${source}: declares ${height}x${width} (${expected} bytes), file has ${buf.length}`);
  }
  const pixels = new Float32Array(height * width);
  for (let i = 0; i < pixels.length; i++) {
    const v = buf.readFloatLE(HEADER_BYTES + 4 * i);
    if (!Number.isFinite(v)) {
      throw new Error(`${source}: non-finite value at pixel ${i}`);
    }
    pixels[i] = v;
  }
  return { height, width, pixels };
}

export function writeGrid(slice: Slice, file: string): void {
  fs.writeFileSync(file, encode("F32G", slice));
}

export function readGrid(file: string): Slice {
  return decode("F32G", fs.readFileSync(file), file);
}

export function writeMask(slice: Slice, file: string): void {
  for (const v of slice.pixels) {
    if (v !== 0 && v !== 1) throw new Error(`mask value ${v} is not 0 or 1`);
  }
  fs.writeFileSync(file, encode("MSKG", slice));
}

export function readMask(file: string): Slice {
  const slice = decode("MSKG", fs.readFileSync(file), file);
  for (const v of slice.pixels) {
    if (v !== 0 && v !== 1) throw new Error(`${file}: mask value ${v} is not 0 or 1`);
  }
  return slice;
}

export interface ManifestEntry {
  image: string; // relative to the manifest directory
  mask: string | null;
}

export interface Manifest {
  baseDir: string;
  entries: ManifestEntry[];
}

export function readManifest(file: string): Manifest {
  const baseDir = path.dirname(file);
  const entries: ManifestEntry[] = [];
  const text = fs.readFileSync(file, "utf-8");
  text.split(/\r?\n/).forEach((raw, idx) => {
    const line = raw.split("#", 1)[0].trimEnd();
    if (!line.trim()) return;
    const parts = line.split("\t");
    if (parts.length > 2) {
      throw new Error(`${file}:${idx + 1}: expected at most one tab separator`);
    }
    const image = parts[0].trim();
    const mask = parts.length === 2 && parts[1].trim() ? parts[1].trim() : null;
    if (!fs.existsSync(path.join(baseDir, image))) {
      throw new Error(`${file}:${idx + 1}: missing image file ${image}`);
    }
    if (mask && !fs.existsSync(path.join(baseDir, mask))) {
      throw new Error(`${file}:${idx + 1}: missing mask file ${mask}`);
    }
    entries.push({ image, mask });
  });
  return { baseDir, entries };
}

export function writeManifest(manifest: Manifest, file: string): void {
  const lines = manifest.entries.map((e) => (e.mask ? `${e.image}\t${e.mask}` : e.image));
  fs.writeFileSync(file, lines.join("\n") + "\n", "utf-8");
}

export function stemOf(relPath: string): string {
  const base = path.basename(relPath);
  const dot = base.lastIndexOf(".");
  return dot > 0 ? base.slice(0, dot) : base;
}
