import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { describe, expect, it } from "vitest";

import { readGrid, writeGrid, writeManifest } from "../src/f32g.js";
import { buildModel, defaultSpec, warmUp } from "../src/models.js";
import { saveCheckpoint } from "../src/train.js";
import { exportReconstructions } from "../src/export.js";

const TINY_CHANNELS = [4, 4, 8, 8, 8];

function tmpDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "export-"));
}

function setup(root: string): { checkpoint: string; testManifest: string } {
  const spec = { ...defaultSpec("vanilla", 32, 6, 3), channels: TINY_CHANNELS };
  const model = buildModel(spec);
  warmUp(model);
  const checkpoint = path.join(root, "ckpt");
  saveCheckpoint(model, null, checkpoint);
  model.dispose();

  const dataDir = path.join(root, "test");
  fs.mkdirSync(dataDir, { recursive: true });
  const entries = [];
  for (let i = 0; i < 3; i++) {
    const pixels = new Float32Array(32 * 32).fill(0.3 + 0.1 * i);
    writeGrid({ height: 32, width: 32, pixels }, path.join(dataDir, `img_${i}.f32g`));
    entries.push({ image: `img_${i}.f32g`, mask: null });
  }
  writeManifest({ baseDir: dataDir, entries }, path.join(dataDir, "manifest.txt"));
  return { checkpoint, testManifest: path.join(dataDir, "manifest.txt") };
}

describe("reconstruction export", () => {
  it("healthy mode writes one clamped grid per test image", () => {
    const root = tmpDir();
    const { checkpoint, testManifest } = setup(root);
    const out = path.join(root, "recons");
    const result = exportReconstructions(checkpoint, testManifest, "healthy", out);
    expect(result.written.length).toBe(3);
    for (let i = 0; i < 3; i++) {
      const file = path.join(out, `img_${i}.healthy.f32g`);
      expect(fs.existsSync(file)).toBe(true);
      const grid = readGrid(file);
      expect(grid.height).toBe(32);
      for (const v of grid.pixels) {
        expect(v).toBeGreaterThanOrEqual(0);
        expect(v).toBeLessThanOrEqual(1);
      }
    }
  });

  it("anomalous mode consumes injection records verbatim", () => {
    const root = tmpDir();
    const { checkpoint, testManifest } = setup(root);
    const injections = path.join(root, "injections");
    fs.mkdirSync(injections);
    // two records in the harness layout: stem.f32g + stem.json (+ stem.maskg)
    for (const stem of ["img_0__I0.4", "img_1__I0.4"]) {
      const pixels = new Float32Array(32 * 32).fill(0.4);
      writeGrid({ height: 32, width: 32, pixels }, path.join(injections, `${stem}.f32g`));
      fs.writeFileSync(path.join(injections, `${stem}.json`), JSON.stringify({
        kind: "intensity", intensity: 0.4, center: [16, 16], radius: 6, seed: null,
      }));
    }
    const out = path.join(root, "recons");
    const result = exportReconstructions(checkpoint, testManifest, "anomalous", out, injections);
    expect(result.written.map((f) => path.basename(f)).sort()).toEqual([
      "img_0__I0.4.anomalous.f32g",
      "img_1__I0.4.anomalous.f32g",
    ]);
  });

  it("anomalous mode requires the injections directory and matching images", () => {
    const root = tmpDir();
    const { checkpoint, testManifest } = setup(root);
    expect(() =>
      exportReconstructions(checkpoint, testManifest, "anomalous", path.join(root, "o")),
    ).toThrow(/injections/);
    const injections = path.join(root, "inj");
    fs.mkdirSync(injections);
    fs.writeFileSync(path.join(injections, "orphan.json"), "{}");
    expect(() =>
      exportReconstructions(checkpoint, testManifest, "anomalous", path.join(root, "o"),
                            injections),
    ).toThrow(/no matching image/);
  });

  it("rejects shape mismatches", () => {
    const root = tmpDir();
    const { checkpoint } = setup(root);
    const dataDir = path.join(root, "big");
    fs.mkdirSync(dataDir);
    writeGrid({ height: 64, width: 64, pixels: new Float32Array(64 * 64) },
              path.join(dataDir, "big.f32g"));
    writeManifest({ baseDir: dataDir, entries: [{ image: "big.f32g", mask: null }] },
                  path.join(dataDir, "manifest.txt"));
    expect(() =>
      exportReconstructions(checkpoint, path.join(dataDir, "manifest.txt"), "healthy",
                            path.join(root, "o")),
    ).toThrow(/model expects/);
  });
});
