/**
 * Reconstruction export in the evaluation toolkit's external-source layout:
 * one `<stem>.<mode>.f32g` per image, clamped to [0, 1].
 *
 * Healthy mode reconstructs the manifest's test images.  Anomalous mode
 * consumes the harness's injection records verbatim (the `<stem>.f32g` +
 * `<stem>.json` sidecar pairs written by `residual-lab inject`); anomalies
 * are never re-sampled here.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { Slice, readGrid, readManifest, stemOf, writeGrid } from "./f32g.js";
import { ReconModel } from "./models.js";
import { loadCheckpoint } from "./train.js";

export type ReconMode = "healthy" | "anomalous";

function reconstructSlice(model: ReconModel, slice: Slice): Slice {
  if (slice.height !== model.spec.imageSize || slice.width !== model.spec.imageSize) {
    throw new Error(
      `slice is ${slice.height}x${slice.width}, model expects ` +
      `${model.spec.imageSize}x${model.spec.imageSize}`,
    );
  }
  const out = tf.tidy(() => {
    const x = tf.tensor4d(slice.pixels, [1, slice.height, slice.width, 1]);
    const { recon } = model.forward(x, false);
    return tf.clipByValue(recon, 0, 1).dataSync() as Float32Array;
  });
  return { height: slice.height, width: slice.width, pixels: Float32Array.from(out) };
}

export interface ExportResult {
  outDir: string;
  written: string[];
}

export function exportReconstructions(
  checkpointBase: string,
  testManifestPath: string,
  mode: ReconMode,
  outDir: string,
  injectionsDir: string | null = null,
): ExportResult {
  const model = loadCheckpoint(checkpointBase);
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  try {
    if (mode === "healthy") {
      const manifest = readManifest(testManifestPath);
      for (const entry of manifest.entries) {
        const slice = readGrid(path.join(manifest.baseDir, entry.image));
        const recon = reconstructSlice(model, slice);
        const file = path.join(outDir, `${stemOf(entry.image)}.healthy.f32g`);
        writeGrid(recon, file);
        written.push(file);
      }
    } else {
      if (!injectionsDir) {
        throw new Error("anomalous mode needs --injections (the harness's record dir)");
      }
      const sidecars = fs
        .readdirSync(injectionsDir)
        .filter((name) => name.endsWith(".json"))
        .sort();
      if (sidecars.length === 0) {
        throw new Error(`no injection sidecars (*.json) found in ${injectionsDir}`);
      }
      for (const sidecar of sidecars) {
        const stem = sidecar.slice(0, -5);
        const imagePath = path.join(injectionsDir, `${stem}.f32g`);
        if (!fs.existsSync(imagePath)) {
          throw new Error(`sidecar ${sidecar} has no matching image ${stem}.f32g`);
        }
        const recon = reconstructSlice(model, readGrid(imagePath));
        const file = path.join(outDir, `${stem}.anomalous.f32g`);
        writeGrid(recon, file);
        written.push(file);
      }
    }
  } finally {
    model.dispose();
  }
  return { outDir, written };
}
