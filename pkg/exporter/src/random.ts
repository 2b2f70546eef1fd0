/** Deterministic RNG and schema-complete random checkpoint generation
 * (for round-trip tests when no real checkpoint is at hand). */

import { ModelConfig, schema } from "./config";
import { Tensor, buildNpy } from "./npy";
import { defaultUpstreamName } from "./namemap";
import { ZipEntry, buildZip } from "./zipfile";

export class Rng {
  private state: number;

  constructor(seed: number) {
    this.state = seed >>> 0;
  }

  next(): number {
    // mulberry32
    this.state = (this.state + 0x6d2b79f5) >>> 0;
    let t = this.state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  }

  normal(): number {
    const u = Math.max(this.next(), 1e-12);
    const v = this.next();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  }
}

/** The grouped-conv layout some frameworks use for the band map. */
export function depthAsGroupedConv(shape: number[]): number[] {
  const [channels, keys, bins] = shape;
  return [channels * keys, 1, bins, 1];
}

export function randomCheckpoint(cfg: ModelConfig, seed: number): Buffer {
  const rng = new Rng(seed);
  const entries: ZipEntry[] = [];
  for (const spec of schema(cfg)) {
    const count = spec.shape.reduce((a, b) => a * b, 1);
    const data = new Float32Array(count);
    if (spec.role === "var") {
      for (let i = 0; i < count; i++) data[i] = 0.5 + 0.5 * rng.next();
    } else if (spec.role === "gamma" || spec.role === "att_bias") {
      for (let i = 0; i < count; i++) data[i] = 1.0;
    } else if (spec.role === "weight") {
      const fanIn = spec.shape.slice(1).reduce((a, b) => a * b, 1);
      const std = Math.sqrt(2 / fanIn);
      for (let i = 0; i < count; i++) data[i] = std * rng.normal();
    } // bias/beta/mean stay zero
    let shape = spec.shape;
    if (spec.name === "stem.depth.weight") {
      shape = depthAsGroupedConv(spec.shape);
    }
    const tensor: Tensor = { shape, data };
    entries.push({
      name: `${defaultUpstreamName(spec.name)}.npy`,
      data: buildNpy(tensor),
    });
  }
  // a typical stray tensor the exporter must report, not choke on
  entries.push({
    name: "training.step.npy",
    data: buildNpy({ shape: [1], data: new Float32Array([12345]) }),
  });
  return buildZip(entries);
}
