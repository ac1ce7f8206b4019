/**
 * Volume ingestion: NIfTI directory -> 2D slice dataset.
 *
 * The split is by volume (never by slice), 60% train / 40% test in the
 * sorted filename order.  Training takes the 20 axial slices around the
 * volume center; testing takes the center slice only.  Voxel intensities
 * must already lie in [0, 1] (pass-through normalization); object masks
 * mark non-zero pixels.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Manifest, ManifestEntry, Slice, stemOf, writeGrid, writeManifest, writeMask } from "./f32g.js";
import { axialSlice, readNifti } from "./nifti.js";

export interface SliceExtractionSpec {
  trainSlicesPerVolume: number; // slices around the center
  trainFraction: number; // volume-level split
}

export const DEFAULT_EXTRACTION: SliceExtractionSpec = {
  trainSlicesPerVolume: 20,
  trainFraction: 0.6,
};

export interface IngestResult {
  trainManifest: string;
  testManifest: string;
  trainVolumes: number;
  testVolumes: number;
}

function isVolumeFile(name: string): boolean {
  return name.endsWith(".nii") || name.endsWith(".nii.gz");
}

function volumeStem(name: string): string {
  return name.replace(/\.nii(\.gz)?$/, "");
}

function sliceRange(nz: number, count: number): number[] {
  const start = Math.max(0, Math.floor(nz / 2) - Math.floor(count / 2));
  const end = Math.min(nz, start + count);
  const out: number[] = [];
  for (let z = start; z < end; z++) out.push(z);
  return out;
}

function writeSlicePair(
  slice: Slice,
  outDir: string,
  stem: string,
  entries: ManifestEntry[],
  source: string,
): void {
  for (const v of slice.pixels) {
    if (!(v >= 0 && v <= 1)) {
      throw new Error(`${source}: voxel intensity ${v} outside [0, 1]`);
    }
  }
  const mask: Slice = {
    height: slice.height,
    width: slice.width,
    pixels: Float32Array.from(slice.pixels, (v) => (v > 0 ? 1 : 0)),
  };
  writeGrid(slice, path.join(outDir, `${stem}.f32g`));
  writeMask(mask, path.join(outDir, `${stem}.maskg`));
  entries.push({ image: `${stem}.f32g`, mask: `${stem}.maskg` });
}

export function ingestVolumes(
  inputDir: string,
  outDir: string,
  spec: SliceExtractionSpec = DEFAULT_EXTRACTION,
): IngestResult {
  const names = fs.readdirSync(inputDir).filter(isVolumeFile).sort();
  if (names.length === 0) {
    throw new Error(`no .nii/.nii.gz volumes found in ${inputDir}`);
  }
  const nTrain = Math.round(names.length * spec.trainFraction);
  const trainNames = names.slice(0, nTrain);
  const testNames = names.slice(nTrain);

  const trainDir = path.join(outDir, "train");
  const testDir = path.join(outDir, "test");
  fs.mkdirSync(trainDir, { recursive: true });
  fs.mkdirSync(testDir, { recursive: true });

  const trainEntries: ManifestEntry[] = [];
  for (const name of trainNames) {
    const volume = readNifti(path.join(inputDir, name));
    for (const z of sliceRange(volume.dims[2], spec.trainSlicesPerVolume)) {
      const slice = axialSlice(volume, z);
      writeSlicePair(slice, trainDir, `${volumeStem(name)}_z${String(z).padStart(3, "0")}`,
                     trainEntries, name);
    }
  }
  const testEntries: ManifestEntry[] = [];
  for (const name of testNames) {
    const volume = readNifti(path.join(inputDir, name));
    const z = Math.floor(volume.dims[2] / 2);
    writeSlicePair(axialSlice(volume, z), testDir, volumeStem(name), testEntries, name);
  }

  const trainManifest: Manifest = { baseDir: trainDir, entries: trainEntries };
  const testManifest: Manifest = { baseDir: testDir, entries: testEntries };
  writeManifest(trainManifest, path.join(trainDir, "manifest.txt"));
  writeManifest(testManifest, path.join(testDir, "manifest.txt"));
  return {
    trainManifest: path.join(trainDir, "manifest.txt"),
    testManifest: path.join(testDir, "manifest.txt"),
    trainVolumes: trainNames.length,
    testVolumes: testNames.length,
  };
}

export { stemOf };
