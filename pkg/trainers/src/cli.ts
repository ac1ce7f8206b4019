/**
 * Command entry: `node dist/cli.js <ingest|train|export> [flags]`.
 *
 * ingest  --input DIR --out DIR [--train-slices 20] [--train-fraction 0.6]
 * train   --kind vanilla|spatial|vqvae --latent 128 --train MANIFEST --out DIR
 *         [--steps 10000] [--batch 128] [--lr 0.001] [--seed 0]
 *         [--val-fraction 0.05] [--latent-weight 0.25] [--weight-decay 0.01]
 *         [--channels 32,64,128,256,256]
 * export  --checkpoint BASE --test MANIFEST --mode healthy|anomalous --out DIR
 *         [--injections DIR]   (required for anomalous mode)
 */

import { parseArgs } from "node:util";

import { ingestVolumes } from "./ingest.js";
import { ModelKind } from "./models.js";
import { defaultTrainSpec, trainModel } from "./train.js";
import { ReconMode, exportReconstructions } from "./export.js";

function fail(message: string): never {
  console.error(`recon-trainers: ${message}`);
  process.exit(1);
}

function required(values: Record<string, unknown>, key: string): string {
  const v = values[key];
  if (typeof v !== "string" || !v) fail(`--${key} is required`);
  return v;
}

function num(values: Record<string, unknown>, key: string, fallback: number): number {
  const v = values[key];
  if (v === undefined) return fallback;
  const parsed = Number(v);
  if (!Number.isFinite(parsed)) fail(`--${key} must be a number, got ${v}`);
  return parsed;
}

function cmdIngest(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      input: { type: "string" },
      out: { type: "string" },
      "train-slices": { type: "string" },
      "train-fraction": { type: "string" },
    },
  });
  const result = ingestVolumes(required(values, "input"), required(values, "out"), {
    trainSlicesPerVolume: num(values, "train-slices", 20),
    trainFraction: num(values, "train-fraction", 0.6),
  });
  console.error(
    `ingested ${result.trainVolumes} train / ${result.testVolumes} test volumes; ` +
    `manifests: ${result.trainManifest}, ${result.testManifest}`,
  );
}

function cmdTrain(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      kind: { type: "string" },
      latent: { type: "string" },
      train: { type: "string" },
      out: { type: "string" },
      steps: { type: "string" },
      batch: { type: "string" },
      lr: { type: "string" },
      seed: { type: "string" },
      "val-fraction": { type: "string" },
      "latent-weight": { type: "string" },
      "weight-decay": { type: "string" },
      "eval-every": { type: "string" },
      channels: { type: "string" },
    },
  });
  const kind = required(values, "kind") as ModelKind;
  if (!["vanilla", "spatial", "vqvae"].includes(kind)) {
    fail(`--kind must be vanilla, spatial, or vqvae, got ${kind}`);
  }
  const spec = defaultTrainSpec(kind, Math.round(num(values, "latent", 128)),
                                Math.round(num(values, "seed", 0)));
  spec.steps = Math.round(num(values, "steps", spec.steps));
  spec.batchSize = Math.round(num(values, "batch", spec.batchSize));
  spec.learningRate = num(values, "lr", spec.learningRate);
  spec.validationFraction = num(values, "val-fraction", spec.validationFraction);
  spec.latentWeight = num(values, "latent-weight", spec.latentWeight);
  spec.weightDecay = num(values, "weight-decay", spec.weightDecay);
  spec.evalEvery = Math.round(num(values, "eval-every", spec.evalEvery));
  const overrides =
    typeof values.channels === "string"
      ? { channels: values.channels.split(",").map((c) => Math.round(Number(c))) }
      : {};
  const result = trainModel(spec, required(values, "train"), required(values, "out"), overrides);
  console.error(
    `trained ${kind} (latent ${spec.latentSize}) for ${result.steps} steps; ` +
    `final train loss ${result.finalTrainLoss.toPrecision(6)}, ` +
    `val loss ${result.finalValLoss.toPrecision(6)}; checkpoint at ${result.checkpointPath}`,
  );
}

function cmdExport(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      checkpoint: { type: "string" },
      test: { type: "string" },
      mode: { type: "string" },
      out: { type: "string" },
      injections: { type: "string" },
    },
  });
  const mode = required(values, "mode") as ReconMode;
  if (mode !== "healthy" && mode !== "anomalous") {
    fail(`--mode must be healthy or anomalous, got ${mode}`);
  }
  const result = exportReconstructions(
    required(values, "checkpoint"),
    required(values, "test"),
    mode,
    required(values, "out"),
    typeof values.injections === "string" ? values.injections : null,
  );
  console.error(`wrote ${result.written.length} ${mode} reconstructions to ${result.outDir}`);
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "ingest") cmdIngest(rest);
    else if (command === "train") cmdTrain(rest);
    else if (command === "export") cmdExport(rest);
    else fail(`unknown command ${command ?? "(none)"}; expected ingest, train, or export`);
  } catch (err) {
    fail(err instanceof Error ? err.message : String(err));
  }
}

main();
