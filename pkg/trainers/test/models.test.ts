import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import { ModelSpec, buildModel, defaultSpec, warmUp } from "../src/models.js";

const TINY_CHANNELS = [4, 4, 8, 8, 8];

function tinySpec(kind: ModelSpec["kind"], seed = 1): ModelSpec {
  return {
    ...defaultSpec(kind, 32, 6, seed),
    channels: [...TINY_CHANNELS],
    codeDim: 8,
    codebookSize: 16,
  };
}

describe("model forward passes", () => {
  it.each(["vanilla", "spatial", "vqvae"] as const)("%s reconstructs input shape", (kind) => {
    const model = buildModel(tinySpec(kind));
    const x = tf.randomUniform([2, 32, 32, 1], 0, 1, "float32", 7) as tf.Tensor4D;
    const { recon, latentLoss } = model.forward(x, false);
    expect(recon.shape).toEqual([2, 32, 32, 1]);
    expect(Number.isFinite(tf.mean(recon).dataSync()[0])).toBe(true);
    if (kind === "vqvae") {
      expect(latentLoss).not.toBeNull();
      expect(Number.isFinite(latentLoss!.dataSync()[0])).toBe(true);
    } else {
      expect(latentLoss).toBeNull();
    }
    model.dispose();
  });

  it("rejects image sizes the stride pyramid cannot divide", () => {
    expect(() => buildModel({ ...tinySpec("vanilla"), imageSize: 48 })).toThrow(/divide by 32/);
    expect(() => buildModel({ ...tinySpec("vqvae"), imageSize: 20 })).toThrow(/divide by 8/);
  });

  it("same seed gives identical initial forward outputs", () => {
    const x = tf.randomUniform([1, 32, 32, 1], 0, 1, "float32", 3) as tf.Tensor4D;
    const outputs: Float32Array[] = [];
    for (let run = 0; run < 2; run++) {
      const model = buildModel(tinySpec("vanilla", 42));
      const { recon } = model.forward(x, false);
      outputs.push(recon.dataSync() as Float32Array);
      model.dispose();
    }
    expect(Array.from(outputs[0])).toEqual(Array.from(outputs[1]));
  });

  it("different seeds give different initializations", () => {
    const x = tf.randomUniform([1, 32, 32, 1], 0, 1, "float32", 3) as tf.Tensor4D;
    const a = buildModel(tinySpec("vanilla", 1));
    const b = buildModel(tinySpec("vanilla", 2));
    const ra = a.forward(x, false).recon.dataSync();
    const rb = b.forward(x, false).recon.dataSync();
    a.dispose();
    b.dispose();
    expect(Array.from(ra)).not.toEqual(Array.from(rb));
  });

  it("vqvae latent maps sit at 1/4 and 1/8 resolution with codeDim channels", () => {
    // verified indirectly through weight shapes: the pre-VQ convs output codeDim
    const model = buildModel(tinySpec("vqvae"));
    warmUp(model);
    const names = model.namedWeights().map((w) => w.name);
    expect(names.some((n) => n.includes("pre_vq_t"))).toBe(true);
    expect(names.some((n) => n.includes("pre_vq_b"))).toBe(true);
    const top = model.namedWeights().find((w) => w.name === "vq_top/codebook")!;
    expect(top.variable.shape).toEqual([16, 8]);
    model.dispose();
  });

  it("vanilla latent is a dense vector, spatial latent keeps a grid", () => {
    const vanilla = buildModel(tinySpec("vanilla"));
    warmUp(vanilla);
    const vw = vanilla.namedWeights().find((w) => w.name.includes("to_latent/kernel"))!;
    expect(vw.variable.shape).toEqual([8 * 1 * 1, 6]); // 32/32=1 spatial cell, dense to 6
    vanilla.dispose();
    const spatial = buildModel(tinySpec("spatial"));
    warmUp(spatial);
    const sw = spatial.namedWeights().find((w) => w.name.includes("to_latent/kernel"))!;
    expect(sw.variable.shape).toEqual([1, 1, 8, 6]); // 1x1 conv to 6 channels
    spatial.dispose();
  });
});
