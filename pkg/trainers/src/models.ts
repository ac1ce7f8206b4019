/**
 * Reconstruction models: vanilla autoencoder, spatial autoencoder, and a
 * two-level hierarchical VQ-VAE.
 *
 * Vanilla/spatial share one encoder/decoder skeleton: five stride-2
 * convolution blocks (conv -> batch norm -> leaky ReLU), mirrored with
 * transpose convolutions, and a final convolution producing the output.
 * They differ only in the bottleneck: a dense latent vector of size
 * `latentSize` (vanilla) vs a 1x1-convolution latent map with `latentSize`
 * channels that keeps the 2D layout (spatial).
 *
 * The VQ-VAE follows the classic two-scale layout: a bottom latent map at
 * 1/4 resolution and a top latent map at 1/8 resolution, both quantized
 * against learned codebooks with a straight-through estimator.  For
 * 256x256 inputs with 64-dim codes this gives 64x64x64 and 64x32x32
 * latents, the largest capacity of the family.
 */

import * as tf from "@tensorflow/tfjs";

export type ModelKind = "vanilla" | "spatial" | "vqvae";

export interface ModelSpec {
  kind: ModelKind;
  imageSize: number; // square inputs, must divide by 32 (AEs) / 8 (VQ-VAE)
  latentSize: number; // c_l: dense units (vanilla) or bottleneck channels (spatial)
  channels: number[]; // encoder widths per downsampling block
  codeDim: number; // VQ-VAE embedding dimension
  codebookSize: number; // VQ-VAE entries per codebook
  commitmentCost: number; // beta inside the VQ latent loss
  seed: number;
}

export const DEFAULT_CHANNELS = [32, 64, 128, 256, 256];

export function defaultSpec(kind: ModelKind, imageSize: number, latentSize: number,
                            seed: number): ModelSpec {
  return {
    kind,
    imageSize,
    latentSize,
    channels: [...DEFAULT_CHANNELS],
    codeDim: 64,
    codebookSize: 512,
    commitmentCost: 0.25,
    seed,
  };
}

export interface ForwardResult {
  recon: tf.Tensor4D;
  latentLoss: tf.Scalar | null; // VQ codebook + commitment terms; null for AEs
}

export interface NamedVariable {
  name: string;
  variable: tf.Variable;
}

export interface ReconModel {
  spec: ModelSpec;
  forward(x: tf.Tensor4D, training: boolean): ForwardResult;
  trainableVariables(): tf.Variable[];
  namedWeights(): NamedVariable[]; // every weight, incl. batch-norm stats
  dispose(): void;
}

type AnyLayer = tf.layers.Layer;

class LayerBag {
  layers: AnyLayer[] = [];
  private seedCounter: number;

  constructor(seed: number) {
    this.seedCounter = seed * 1000 + 1;
  }

  nextSeed(): number {
    return this.seedCounter++;
  }

  conv(filters: number, kernel: number, stride: number, name: string): AnyLayer {
    const layer = tf.layers.conv2d({
      filters,
      kernelSize: kernel,
      strides: stride,
      padding: "same",
      kernelInitializer: tf.initializers.glorotUniform({ seed: this.nextSeed() }),
      name,
    });
    this.layers.push(layer);
    return layer;
  }

  deconv(filters: number, kernel: number, stride: number, name: string): AnyLayer {
    const layer = tf.layers.conv2dTranspose({
      filters,
      kernelSize: kernel,
      strides: stride,
      padding: "same",
      kernelInitializer: tf.initializers.glorotUniform({ seed: this.nextSeed() }),
      name,
    });
    this.layers.push(layer);
    return layer;
  }

  bn(name: string): AnyLayer {
    const layer = tf.layers.batchNormalization({ name });
    this.layers.push(layer);
    return layer;
  }

  dense(units: number, name: string): AnyLayer {
    const layer = tf.layers.dense({
      units,
      kernelInitializer: tf.initializers.glorotUniform({ seed: this.nextSeed() }),
      name,
    });
    this.layers.push(layer);
    return layer;
  }
}

const LEAKY_ALPHA = 0.2;

function lrelu(x: tf.Tensor): tf.Tensor {
  return tf.leakyRelu(x, LEAKY_ALPHA);
}

// LayerVariable types `.val` as protected; the runtime object exposes it.
function unwrap(w: object): tf.Variable {
  return (w as unknown as { val: tf.Variable }).val;
}

function collectTrainable(layers: AnyLayer[]): tf.Variable[] {
  const out: tf.Variable[] = [];
  for (const layer of layers) {
    for (const w of layer.trainableWeights) out.push(unwrap(w));
  }
  return out;
}

function collectNamed(layers: AnyLayer[]): NamedVariable[] {
  const out: NamedVariable[] = [];
  for (const layer of layers) {
    for (const w of layer.weights) {
      out.push({ name: w.name, variable: unwrap(w) });
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vanilla / spatial autoencoders
// ---------------------------------------------------------------------------

class Autoencoder implements ReconModel {
  readonly spec: ModelSpec;
  private bag: LayerBag;
  private encoderConvs: AnyLayer[] = [];
  private encoderNorms: AnyLayer[] = [];
  private decoderDeconvs: AnyLayer[] = [];
  private decoderNorms: AnyLayer[] = [];
  private toLatent!: AnyLayer; // dense (vanilla) or 1x1 conv (spatial)
  private fromLatent!: AnyLayer;
  private outputConv: AnyLayer;
  private bottomSize: number;

  constructor(spec: ModelSpec) {
    if (spec.imageSize % 32 !== 0) {
      throw new Error(`autoencoder image size must divide by 32, got ${spec.imageSize}`);
    }
    this.spec = spec;
    this.bag = new LayerBag(spec.seed);
    const ch = spec.channels;
    if (ch.length !== 5) throw new Error(`expected 5 encoder widths, got ${ch.length}`);
    for (let i = 0; i < 5; i++) {
      this.encoderConvs.push(this.bag.conv(ch[i], 4, 2, `enc${i}_conv`));
      this.encoderNorms.push(this.bag.bn(`enc${i}_bn`));
    }
    this.bottomSize = spec.imageSize / 32;
    if (spec.kind === "vanilla") {
      this.toLatent = this.bag.dense(spec.latentSize, "to_latent");
      this.fromLatent = this.bag.dense(ch[4] * this.bottomSize * this.bottomSize, "from_latent");
    } else {
      this.toLatent = this.bag.conv(spec.latentSize, 1, 1, "to_latent");
      this.fromLatent = this.bag.conv(ch[4], 1, 1, "from_latent");
    }
    for (let i = 4; i >= 0; i--) {
      const filters = i > 0 ? ch[i - 1] : ch[0];
      this.decoderDeconvs.push(this.bag.deconv(filters, 4, 2, `dec${i}_deconv`));
      this.decoderNorms.push(this.bag.bn(`dec${i}_bn`));
    }
    this.outputConv = this.bag.conv(1, 3, 1, "output_conv");
  }

  forward(x: tf.Tensor4D, training: boolean): ForwardResult {
    let h: tf.Tensor = x;
    for (let i = 0; i < 5; i++) {
      h = this.encoderConvs[i].apply(h) as tf.Tensor;
      h = this.encoderNorms[i].apply(h, { training }) as tf.Tensor;
      h = lrelu(h);
    }
    const ch = this.spec.channels;
    if (this.spec.kind === "vanilla") {
      const flat = tf.reshape(h, [x.shape[0], -1]);
      const z = this.toLatent.apply(flat) as tf.Tensor;
      const up = this.fromLatent.apply(z) as tf.Tensor;
      h = tf.reshape(up, [x.shape[0], this.bottomSize, this.bottomSize, ch[4]]);
    } else {
      const z = this.toLatent.apply(h) as tf.Tensor;
      h = this.fromLatent.apply(z) as tf.Tensor;
    }
    for (let i = 0; i < 5; i++) {
      h = this.decoderDeconvs[i].apply(h) as tf.Tensor;
      h = this.decoderNorms[i].apply(h, { training }) as tf.Tensor;
      h = lrelu(h);
    }
    const recon = this.outputConv.apply(h) as tf.Tensor4D;
    return { recon, latentLoss: null };
  }

  trainableVariables(): tf.Variable[] {
    return collectTrainable(this.bag.layers);
  }

  namedWeights(): NamedVariable[] {
    return collectNamed(this.bag.layers);
  }

  dispose(): void {
    for (const layer of this.bag.layers) layer.dispose();
  }
}

// ---------------------------------------------------------------------------
// VQ-VAE
// ---------------------------------------------------------------------------

/** Identity in the forward pass, zero gradient in the backward pass. */
const stopGradient = tf.customGrad((x, save) => {
  void save;
  return {
    value: (x as tf.Tensor).clone(),
    gradFunc: (dy) => [tf.zerosLike(dy as tf.Tensor)],
  };
});

class VectorQuantizer {
  readonly codebook: tf.Variable; // [codebookSize, codeDim]
  readonly name: string;
  private commitment: number;

  constructor(name: string, codebookSize: number, codeDim: number, commitment: number,
              seed: number) {
    this.name = name;
    this.commitment = commitment;
    this.codebook = tf.variable(
      tf.randomUniform([codebookSize, codeDim], -1 / codebookSize, 1 / codebookSize,
                       "float32", seed),
      true,
      `${name}/codebook`,
    );
  }

  /** Quantize z_e; returns straight-through codes and the latent loss. */
  apply(zE: tf.Tensor4D): { quantized: tf.Tensor4D; loss: tf.Scalar } {
    const [b, h, w, d] = zE.shape;
    const flat = tf.reshape(zE, [b * h * w, d]);
    const flatConst = stopGradient(flat);
    const distances = tf.add(
      tf.sum(tf.square(flatConst), 1, true),
      tf.sub(
        tf.sum(tf.square(this.codebook), 1).reshape([1, -1]),
        tf.mul(2, tf.matMul(flatConst, this.codebook, false, true)),
      ),
    );
    // detach the assignment indices from the tape (argmin has no gradient;
    // a tape-connected int tensor trips the gather gradient)
    const argmin = tf.argMin(distances as tf.Tensor2D, 1);
    const indices = tf.tensor1d(argmin.dataSync() as Int32Array, "int32");
    const codes = tf.gather(this.codebook, indices); // differentiable wrt codebook
    const quantized = tf.reshape(codes, [b, h, w, d]) as tf.Tensor4D;
    const codebookLoss = tf.mean(tf.square(tf.sub(quantized, stopGradient(zE))));
    const commitLoss = tf.mean(tf.square(tf.sub(zE, stopGradient(quantized))));
    const loss = tf.add(codebookLoss, tf.mul(this.commitment, commitLoss)) as tf.Scalar;
    // straight-through estimator: gradients flow to z_e, values from the codes
    const st = tf.add(zE, stopGradient(tf.sub(quantized, zE))) as tf.Tensor4D;
    return { quantized: st, loss };
  }
}

class ResidualStack {
  convs: AnyLayer[] = [];

  constructor(bag: LayerBag, channels: number, blocks: number, prefix: string) {
    for (let i = 0; i < blocks; i++) {
      this.convs.push(bag.conv(channels, 3, 1, `${prefix}_res${i}_a`));
      this.convs.push(bag.conv(channels, 1, 1, `${prefix}_res${i}_b`));
    }
  }

  apply(x: tf.Tensor): tf.Tensor {
    let h = x;
    for (let i = 0; i < this.convs.length; i += 2) {
      let r = this.convs[i].apply(tf.relu(h)) as tf.Tensor;
      r = this.convs[i + 1].apply(tf.relu(r)) as tf.Tensor;
      h = tf.add(h, r);
    }
    return tf.relu(h);
  }
}

class HierarchicalVqVae implements ReconModel {
  readonly spec: ModelSpec;
  private bag: LayerBag;
  private encB: AnyLayer[];
  private encBres: ResidualStack;
  private encT: AnyLayer[];
  private encTres: ResidualStack;
  private preVqT: AnyLayer;
  private quantT: VectorQuantizer;
  private decT: ResidualStack;
  private decTup: AnyLayer;
  private preVqB: AnyLayer;
  private quantB: VectorQuantizer;
  private upsampleT: AnyLayer;
  private decoderHead: AnyLayer;
  private decoderRes: ResidualStack;
  private decoderUp1: AnyLayer;
  private decoderUp2: AnyLayer;
  private outputConv: AnyLayer;

  constructor(spec: ModelSpec) {
    if (spec.imageSize % 8 !== 0) {
      throw new Error(`vq-vae image size must divide by 8, got ${spec.imageSize}`);
    }
    this.spec = spec;
    const bag = new LayerBag(spec.seed);
    this.bag = bag;
    const ch = spec.channels[2]; // working width of the residual trunks
    this.encB = [
      bag.conv(ch / 2, 4, 2, "encb_conv0"),
      bag.conv(ch, 4, 2, "encb_conv1"),
      bag.conv(ch, 3, 1, "encb_conv2"),
    ];
    this.encBres = new ResidualStack(bag, ch, 2, "encb");
    this.encT = [bag.conv(ch, 4, 2, "enct_conv0"), bag.conv(ch, 3, 1, "enct_conv1")];
    this.encTres = new ResidualStack(bag, ch, 2, "enct");
    this.preVqT = bag.conv(spec.codeDim, 1, 1, "pre_vq_t");
    this.quantT = new VectorQuantizer("vq_top", spec.codebookSize, spec.codeDim,
                                      spec.commitmentCost, bag.nextSeed());
    this.decT = new ResidualStack(bag, spec.codeDim, 2, "dect");
    this.decTup = bag.deconv(spec.codeDim, 4, 2, "dect_up");
    this.preVqB = bag.conv(spec.codeDim, 1, 1, "pre_vq_b");
    this.quantB = new VectorQuantizer("vq_bottom", spec.codebookSize, spec.codeDim,
                                      spec.commitmentCost, bag.nextSeed());
    this.upsampleT = bag.deconv(spec.codeDim, 4, 2, "upsample_t");
    this.decoderHead = bag.conv(ch, 3, 1, "dec_head");
    this.decoderRes = new ResidualStack(bag, ch, 2, "dec");
    this.decoderUp1 = bag.deconv(ch / 2, 4, 2, "dec_up1");
    this.decoderUp2 = bag.deconv(ch / 2, 4, 2, "dec_up2");
    this.outputConv = bag.conv(1, 3, 1, "output_conv");
  }

  forward(x: tf.Tensor4D, training: boolean): ForwardResult {
    void training; // no batch norm in this architecture
    let hb: tf.Tensor = x;
    hb = tf.relu(this.encB[0].apply(hb) as tf.Tensor);
    hb = tf.relu(this.encB[1].apply(hb) as tf.Tensor);
    hb = this.encB[2].apply(hb) as tf.Tensor;
    hb = this.encBres.apply(hb); // S/4

    let ht: tf.Tensor = tf.relu(this.encT[0].apply(hb) as tf.Tensor);
    ht = this.encT[1].apply(ht) as tf.Tensor;
    ht = this.encTres.apply(ht); // S/8

    const zT = this.preVqT.apply(ht) as tf.Tensor4D;
    const { quantized: qT, loss: lossT } = this.quantT.apply(zT);

    let decT = this.decT.apply(qT);
    decT = this.decTup.apply(decT) as tf.Tensor; // S/4

    const zB = this.preVqB.apply(tf.concat([hb, decT], 3)) as tf.Tensor4D;
    const { quantized: qB, loss: lossB } = this.quantB.apply(zB);

    const upT = this.upsampleT.apply(qT) as tf.Tensor; // S/4
    let h = this.decoderHead.apply(tf.concat([qB, upT], 3)) as tf.Tensor;
    h = this.decoderRes.apply(h);
    h = tf.relu(this.decoderUp1.apply(h) as tf.Tensor); // S/2
    h = tf.relu(this.decoderUp2.apply(h) as tf.Tensor); // S
    const recon = this.outputConv.apply(h) as tf.Tensor4D;
    return { recon, latentLoss: tf.add(lossT, lossB) as tf.Scalar };
  }

  trainableVariables(): tf.Variable[] {
    return [...collectTrainable(this.bag.layers), this.quantT.codebook, this.quantB.codebook];
  }

  namedWeights(): NamedVariable[] {
    return [
      ...collectNamed(this.bag.layers),
      { name: "vq_top/codebook", variable: this.quantT.codebook },
      { name: "vq_bottom/codebook", variable: this.quantB.codebook },
    ];
  }

  dispose(): void {
    for (const layer of this.bag.layers) layer.dispose();
    this.quantT.codebook.dispose();
    this.quantB.codebook.dispose();
  }
}

export function buildModel(spec: ModelSpec): ReconModel {
  if (spec.kind === "vanilla" || spec.kind === "spatial") return new Autoencoder(spec);
  if (spec.kind === "vqvae") return new HierarchicalVqVae(spec);
  throw new Error(`unknown model kind ${(spec as ModelSpec).kind}`);
}

/** Run the model's layers once so every weight exists before load/save. */
export function warmUp(model: ReconModel): void {
  tf.tidy(() => {
    const x = tf.zeros([1, model.spec.imageSize, model.spec.imageSize, 1]) as tf.Tensor4D;
    const { recon, latentLoss } = model.forward(x, false);
    recon.dataSync();
    latentLoss?.dataSync();
    return recon;
  });
}
