/**
 * Bridged mitoseg operations over native typed arrays.
 *
 * Each function round-trips through the mitoseg CLI with EMV1 temp files,
 * so results are numerically identical to driving the CLI by hand.
 */

import * as fs from "node:fs/promises";
import * as path from "node:path";

import { runCli, withTempDir } from "./cli.js";
import { VolumeData, readVolume, writeVolume } from "./emv1.js";

export { decodeVolume, readVolume, writeVolume } from "./emv1.js";
export type { Dtype, VolumeArray, VolumeData } from "./emv1.js";
export { cliCommand, runCli } from "./cli.js";

export interface Frame2D {
  dims: [number, number];
  data: Float32Array;
}

export interface BinStats {
  ap: number;
  precision: number;
  recall: number;
  f1: number;
  tp: number;
  fp: number;
  fn: number;
}

export interface MatchReport {
  iou_threshold: number;
  bins: { small: BinStats; med: BinStats; large: BinStats; all: BinStats };
  pairs: Array<{ pred: number; gt: number; iou: number }>;
}

export interface SeedOptions {
  t1?: number;
  t2?: number;
}

export interface LabelOptions {
  connectivity?: 6 | 26;
  minSize?: number;
  chunk?: [number, number, number];
  workers?: number;
}

/** Threshold probability volumes into a binary u8 seed map. */
export async function makeSeedMap(
  mask: VolumeData<Float32Array>,
  boundary: VolumeData<Float32Array>,
  options: SeedOptions = {},
): Promise<VolumeData<Uint8Array>> {
  return withTempDir(async (dir) => {
    const maskPath = path.join(dir, "mask.emv");
    const boundaryPath = path.join(dir, "boundary.emv");
    const outPath = path.join(dir, "seed.emv");
    await writeVolume(maskPath, mask);
    await writeVolume(boundaryPath, boundary);
    const args = ["seedmap", "--mask", maskPath, "--boundary", boundaryPath, "--out", outPath];
    if (options.t1 !== undefined) args.push("--t1", String(options.t1));
    if (options.t2 !== undefined) args.push("--t2", String(options.t2));
    await runCli(args);
    return (await readVolume(outPath)) as VolumeData<Uint8Array>;
  });
}

/** Label connected seed components into dense u32 instance ids. */
export async function labelComponents(
  seed: VolumeData<Uint8Array>,
  options: LabelOptions = {},
): Promise<VolumeData<Uint32Array>> {
  return withTempDir(async (dir) => {
    const seedPath = path.join(dir, "seed.emv");
    const outPath = path.join(dir, "labels.emv");
    await writeVolume(seedPath, seed);
    const args = ["label", "--seed", seedPath, "--out", outPath];
    if (options.connectivity !== undefined) args.push("--connectivity", String(options.connectivity));
    if (options.minSize !== undefined) args.push("--min-size", String(options.minSize));
    if (options.chunk !== undefined) args.push("--chunk", options.chunk.join(","));
    if (options.workers !== undefined) args.push("--workers", String(options.workers));
    await runCli(args);
    return (await readVolume(outPath)) as VolumeData<Uint32Array>;
  });
}

/** Size-binned average precision of predicted vs ground-truth labels. */
export async function apAtThreshold(
  pred: VolumeData<Uint32Array | BigUint64Array>,
  gt: VolumeData<Uint32Array | BigUint64Array>,
  options: { iouThreshold?: number } = {},
): Promise<MatchReport> {
  return withTempDir(async (dir) => {
    const predPath = path.join(dir, "pred.emv");
    const gtPath = path.join(dir, "gt.emv");
    const reportPath = path.join(dir, "report.json");
    await writeVolume(predPath, pred);
    await writeVolume(gtPath, gt);
    const args = ["evaluate", "--pred", predPath, "--gt", gtPath, "--report", reportPath];
    if (options.iouThreshold !== undefined) args.push("--iou", String(options.iouThreshold));
    await runCli(args);
    return JSON.parse(await fs.readFile(reportPath, "utf8")) as MatchReport;
  });
}

/** Jaccard and DSC of two binary masks. */
export async function semanticMetrics(
  predMask: VolumeData<Uint8Array>,
  gtMask: VolumeData<Uint8Array>,
): Promise<{ jaccard: number; dsc: number }> {
  return withTempDir(async (dir) => {
    const predPath = path.join(dir, "pred.emv");
    const gtPath = path.join(dir, "gt.emv");
    await writeVolume(predPath, predMask);
    await writeVolume(gtPath, gtMask);
    const { stdout } = await runCli(["semantic-eval", "--pred", predPath, "--gt", gtPath]);
    return JSON.parse(stdout) as { jaccard: number; dsc: number };
  });
}

/** Class-balanced BCE loss, foreground ratio, and the gradient volume. */
export async function wbce(
  pred: VolumeData<Float32Array>,
  target: VolumeData<Float32Array>,
): Promise<{ loss: number; wf: number; grad: VolumeData<Float32Array> }> {
  return withTempDir(async (dir) => {
    const predPath = path.join(dir, "pred.emv");
    const targetPath = path.join(dir, "target.emv");
    const gradPath = path.join(dir, "grad.emv");
    await writeVolume(predPath, pred);
    await writeVolume(targetPath, target);
    const { stdout } = await runCli([
      "loss", "--pred", predPath, "--target", targetPath, "--grad-out", gradPath,
    ]);
    const doc = JSON.parse(stdout) as { wbce: number; wf: number };
    const grad = (await readVolume(gradPath)) as VolumeData<Float32Array>;
    return { loss: doc.wbce, wf: doc.wf, grad };
  });
}

export interface KernelStacks {
  /** odd window size */
  k: number;
  /** (H, W, k, k) row-major taps for the previous frame */
  k1: Float32Array;
  /** (H, W, k, k) row-major taps for the next frame */
  k2: Float32Array;
}

/** Restore a frame from its two neighbors via per-pixel kernel stacks. */
export async function applyKernels(
  prev: Frame2D,
  next: Frame2D,
  kernels: KernelStacks,
): Promise<Frame2D> {
  const [h, w] = prev.dims;
  const k = kernels.k;
  if (next.dims[0] !== h || next.dims[1] !== w) {
    throw new Error(`frames have mismatched dims: ${prev.dims} vs ${next.dims}`);
  }
  if (kernels.k1.length !== h * w * k * k || kernels.k2.length !== h * w * k * k) {
    throw new Error("kernel stacks must hold H*W*k*k taps each");
  }
  return withTempDir(async (dir) => {
    const volumePath = path.join(dir, "volume.emv");
    const kfPath = path.join(dir, "kernels.emv");
    const maskPath = path.join(dir, "mask.emv");
    const outPath = path.join(dir, "restored.emv");

    // stack (prev, placeholder, next); the CLI restores the middle frame
    const volume = new Float32Array(3 * h * w);
    volume.set(prev.data, 0);
    volume.set(next.data, 2 * h * w);
    await writeVolume(volumePath, { dims: [3, h, w], data: volume });

    // kernel field file is channel-major: (2*k*k, H, W)
    const packed = new Float32Array(2 * k * k * h * w);
    for (let half = 0; half < 2; half++) {
      const taps = half === 0 ? kernels.k1 : kernels.k2;
      for (let u = 0; u < k; u++) {
        for (let v = 0; v < k; v++) {
          const channel = half * k * k + u * k + v;
          const base = channel * h * w;
          for (let y = 0; y < h; y++) {
            for (let x = 0; x < w; x++) {
              packed[base + y * w + x] = taps[((y * w + x) * k + u) * k + v];
            }
          }
        }
      }
    }
    await writeVolume(kfPath, { dims: [2 * k * k, h, w], data: packed });
    await fs.writeFile(`${kfPath}.json`, JSON.stringify({ k, slice_index: 1 }));
    await writeVolume(maskPath, { dims: [1, h, w], data: new Uint8Array(h * w).fill(1) });

    await runCli([
      "denoise", "--volume", volumePath, "--out", outPath,
      "--restore", `${kfPath}:${maskPath}`,
    ]);
    const restored = (await readVolume(outPath)) as VolumeData<Float32Array>;
    return { dims: [h, w], data: restored.data.slice(h * w, 2 * h * w) };
  });
}
