/**
 * Training: AdamW on an L1 reconstruction objective.
 *
 * Defaults follow the reference recipe: 10000 steps, batch size 128,
 * learning rate 0.001, 5% of the training slices held out for validation,
 * and the VQ latent loss weighted by 0.25 against the reconstruction term.
 * Decoupled weight decay applies to convolution/dense kernels only.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import * as tf from "@tensorflow/tfjs";

import { Manifest, readGrid, readManifest } from "./f32g.js";
import { ModelKind, ModelSpec, ReconModel, buildModel, defaultSpec, warmUp } from "./models.js";
import { Rng } from "./rng.js";

export interface TrainSpec {
  kind: ModelKind;
  latentSize: number;
  steps: number;
  batchSize: number;
  learningRate: number;
  validationFraction: number;
  latentWeight: number; // VQ-VAE latent-loss weight vs the reconstruction loss
  weightDecay: number;
  seed: number;
  evalEvery: number; // validation cadence in steps
}

export function defaultTrainSpec(kind: ModelKind, latentSize: number, seed = 0): TrainSpec {
  return {
    kind,
    latentSize,
    steps: 10000,
    batchSize: 128,
    learningRate: 0.001,
    validationFraction: 0.05,
    latentWeight: 0.25,
    weightDecay: 0.01,
    seed,
    evalEvery: 250,
  };
}

export interface SliceDataset {
  n: number;
  size: number;
  data: Float32Array; // [n, size, size] row-major
}

export function loadSlices(manifest: Manifest): SliceDataset {
  if (manifest.entries.length === 0) throw new Error("manifest holds no images");
  const first = readGrid(path.join(manifest.baseDir, manifest.entries[0].image));
  if (first.height !== first.width) {
    throw new Error(`expected square slices, got ${first.height}x${first.width}`);
  }
  const size = first.height;
  const n = manifest.entries.length;
  const data = new Float32Array(n * size * size);
  data.set(first.pixels, 0);
  for (let i = 1; i < n; i++) {
    const slice = readGrid(path.join(manifest.baseDir, manifest.entries[i].image));
    if (slice.height !== size || slice.width !== size) {
      throw new Error(`slice ${manifest.entries[i].image} is ${slice.height}x${slice.width}, expected ${size}x${size}`);
    }
    data.set(slice.pixels, i * size * size);
  }
  return { n, size, data };
}

function batchTensor(ds: SliceDataset, indices: number[]): tf.Tensor4D {
  const px = ds.size * ds.size;
  const out = new Float32Array(indices.length * px);
  indices.forEach((idx, row) => {
    out.set(ds.data.subarray(idx * px, (idx + 1) * px), row * px);
  });
  return tf.tensor4d(out, [indices.length, ds.size, ds.size, 1]);
}

export interface TrainResult {
  checkpointPath: string;
  curvePath: string;
  steps: number;
  finalTrainLoss: number;
  finalValLoss: number;
}

function lossOn(model: ReconModel, batch: tf.Tensor4D, latentWeight: number,
                training: boolean): tf.Scalar {
  const { recon, latentLoss } = model.forward(batch, training);
  let loss = tf.mean(tf.abs(tf.sub(recon, batch))) as tf.Scalar;
  if (latentLoss !== null) {
    loss = tf.add(loss, tf.mul(latentWeight, latentLoss)) as tf.Scalar;
  }
  return loss;
}

export function trainModel(
  spec: TrainSpec,
  trainManifestPath: string,
  outDir: string,
  modelSpecOverrides: Partial<ModelSpec> = {},
): TrainResult {
  const manifest = readManifest(trainManifestPath);
  const ds = loadSlices(manifest);
  const rng = new Rng(spec.seed);

  // held-out validation split over slice indices (seeded, disjoint)
  const order = rng.shuffle([...Array(ds.n).keys()]);
  const nVal = Math.min(ds.n - 1, Math.max(1, Math.round(ds.n * spec.validationFraction)));
  const valIdx = order.slice(0, nVal);
  const trainIdx = order.slice(nVal);

  const mSpec: ModelSpec = {
    ...defaultSpec(spec.kind, ds.size, spec.latentSize, spec.seed),
    ...modelSpecOverrides,
  };
  const model = buildModel(mSpec);
  warmUp(model);
  const variables = model.trainableVariables();
  const kernels = model
    .namedWeights()
    .filter((w) => w.name.includes("kernel"))
    .map((w) => w.variable);
  const optimizer = tf.train.adam(spec.learningRate);

  fs.mkdirSync(outDir, { recursive: true });
  const curvePath = path.join(outDir, "training_curve.csv");
  const curve: string[] = ["step,train_loss,val_loss"];

  let cursor = 0;
  let epochOrder = rng.shuffle([...trainIdx]);
  const nextBatch = (): number[] => {
    const indices: number[] = [];
    for (let i = 0; i < spec.batchSize; i++) {
      if (cursor >= epochOrder.length) {
        epochOrder = rng.shuffle(epochOrder);
        cursor = 0;
      }
      indices.push(epochOrder[cursor++]);
    }
    return indices;
  };

  const valLoss = (): number => {
    return tf.tidy(() => {
      let total = 0;
      const chunk = Math.min(spec.batchSize, valIdx.length);
      for (let off = 0; off < valIdx.length; off += chunk) {
        const part = valIdx.slice(off, off + chunk);
        const batch = batchTensor(ds, part);
        total += lossOn(model, batch, spec.latentWeight, false).dataSync()[0] * part.length;
      }
      return total / valIdx.length;
    });
  };

  let lastTrain = NaN;
  let lastVal = NaN;
  for (let step = 1; step <= spec.steps; step++) {
    const indices = nextBatch();
    const stepLoss = tf.tidy(() => {
      const batch = batchTensor(ds, indices);
      const loss = optimizer.minimize(
        () => lossOn(model, batch, spec.latentWeight, true),
        true,
        variables,
      ) as tf.Scalar;
      // decoupled weight decay on kernel weights (AdamW)
      if (spec.weightDecay > 0) {
        const factor = 1 - spec.learningRate * spec.weightDecay;
        for (const kernel of kernels) {
          kernel.assign(tf.mul(kernel, factor));
        }
      }
      return loss.dataSync()[0];
    });
    lastTrain = stepLoss;
    if (!Number.isFinite(stepLoss)) {
      throw new Error(
        `training diverged at step ${step}: loss=${stepLoss} ` +
        `(kind=${spec.kind}, lr=${spec.learningRate}, batch=${spec.batchSize})`,
      );
    }
    if (step % spec.evalEvery === 0 || step === spec.steps || step === 1) {
      lastVal = valLoss();
      curve.push(`${step},${stepLoss.toPrecision(8)},${lastVal.toPrecision(8)}`);
    } else {
      curve.push(`${step},${stepLoss.toPrecision(8)},`);
    }
  }

  fs.writeFileSync(curvePath, curve.join("\n") + "\n", "utf-8");
  const checkpointPath = path.join(outDir, "checkpoint");
  saveCheckpoint(model, spec, checkpointPath);
  model.dispose();
  optimizer.dispose();
  return {
    checkpointPath,
    curvePath,
    steps: spec.steps,
    finalTrainLoss: lastTrain,
    finalValLoss: lastVal,
  };
}

// ---------------------------------------------------------------------------
// Checkpoints: `<path>.json` (spec + weight manifest) and `<path>.bin`
// ---------------------------------------------------------------------------

interface WeightRecord {
  name: string;
  shape: number[];
}

interface CheckpointHeader {
  modelSpec: ModelSpec;
  trainSpec: TrainSpec | null;
  weights: WeightRecord[];
}

/** Strip the per-process uniquifier tfjs appends to weight names (kernel_3 -> kernel). */
function canonicalName(name: string): string {
  return name.replace(/_\d+$/, "");
}

export function saveCheckpoint(model: ReconModel, trainSpec: TrainSpec | null,
                               basePath: string): void {
  const named = model.namedWeights();
  const header: CheckpointHeader = {
    modelSpec: model.spec,
    trainSpec,
    weights: named.map((w) => ({ name: canonicalName(w.name), shape: w.variable.shape.slice() })),
  };
  const buffers: Buffer[] = [];
  for (const w of named) {
    const data = w.variable.dataSync() as Float32Array;
    buffers.push(Buffer.from(data.buffer.slice(data.byteOffset, data.byteOffset + data.byteLength)));
  }
  fs.writeFileSync(`${basePath}.json`, JSON.stringify(header, null, 2) + "\n", "utf-8");
  fs.writeFileSync(`${basePath}.bin`, Buffer.concat(buffers));
}

export function loadCheckpoint(basePath: string): ReconModel {
  const header = JSON.parse(fs.readFileSync(`${basePath}.json`, "utf-8")) as CheckpointHeader;
  const raw = fs.readFileSync(`${basePath}.bin`);
  const model = buildModel(header.modelSpec);
  warmUp(model);
  const named = model.namedWeights();
  if (named.length !== header.weights.length) {
    throw new Error(
      `checkpoint lists ${header.weights.length} weights, model has ${named.length}`,
    );
  }
  let offset = 0;
  for (let i = 0; i < named.length; i++) {
    const rec = header.weights[i];
    if (canonicalName(named[i].name) !== rec.name) {
      throw new Error(`weight order mismatch: ${canonicalName(named[i].name)} vs ${rec.name}`);
    }
    if (JSON.stringify(named[i].variable.shape) !== JSON.stringify(rec.shape)) {
      throw new Error(
        `weight shape mismatch for ${rec.name}: ${named[i].variable.shape} vs ${rec.shape}`,
      );
    }
    const count = rec.shape.reduce((a, b) => a * b, 1);
    const values = new Float32Array(raw.buffer, raw.byteOffset + offset, count);
    named[i].variable.assign(tf.tensor(Float32Array.from(values), rec.shape));
    offset += count * 4;
  }
  if (offset !== raw.length) {
    throw new Error(`checkpoint payload is ${raw.length} bytes, consumed ${offset}`);
  }
  return model;
}
