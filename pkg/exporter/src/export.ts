/** Checkpoint -> OVW1 conversion with schema validation. */

import { ModelConfig, DEFAULT_CONFIG, configJson, schema } from "./config";
import { NameMap, buildNameMap } from "./namemap";
import { Tensor, parseNpy } from "./npy";
import { CONFIG_TENSOR, OvwTensor, buildOvw1 } from "./ovw1";
import { depthAsGroupedConv } from "./random";
import { readZip } from "./zipfile";

export class ExportError extends Error {}

export interface ExportReport {
  mapped: number;
  unmappedUpstream: string[];
  parameterCount: number;
}

export function readCheckpoint(buf: Buffer): Map<string, Tensor> {
  const entries = readZip(buf);
  const tensors = new Map<string, Tensor>();
  for (const [name, data] of entries) {
    if (!name.endsWith(".npy")) continue;
    tensors.set(name.slice(0, -4), parseNpy(data));
  }
  if (tensors.size === 0) {
    throw new ExportError("checkpoint contains no .npy arrays");
  }
  return tensors;
}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

/** Accept framework-specific layouts for known tensors (the band map
 * is often stored as a grouped convolution (C*K, 1, F, 1)). */
function adaptShape(name: string, expected: number[],
                    got: Tensor): Tensor {
  if (shapesEqual(got.shape, expected)) return got;
  if (name === "stem.depth.weight" &&
      shapesEqual(got.shape, depthAsGroupedConv(expected))) {
    return { shape: expected, data: got.data };
  }
  throw new ExportError(
    `tensor ${name}: shape [${got.shape}] does not match expected ` +
    `[${expected}]`);
}

export function exportCheckpoint(
  checkpoint: Map<string, Tensor>,
  cfg: ModelConfig = DEFAULT_CONFIG,
  nameMap: NameMap = buildNameMap(DEFAULT_CONFIG),
): { ovw1: Buffer; report: ExportReport } {
  const reverse = new Map<string, string>(); // ovw1 name -> upstream name
  for (const [upstream, ovw] of nameMap.entries) reverse.set(ovw, upstream);

  const tensors: OvwTensor[] = [
    { name: CONFIG_TENSOR, raw: Buffer.from(configJson(cfg), "utf8") },
  ];
  const used = new Set<string>();
  let parameterCount = 0;
  for (const spec of schema(cfg)) {
    const upstream = reverse.get(spec.name);
    if (upstream === undefined) {
      throw new ExportError(
        `name map has no upstream entry for required tensor ${spec.name}`);
    }
    const found = checkpoint.get(upstream);
    if (found === undefined) {
      throw new ExportError(
        `checkpoint is missing ${upstream} (mapped to ${spec.name})`);
    }
    used.add(upstream);
    const tensor = adaptShape(spec.name, spec.shape, found);
    if (spec.role !== "mean" && spec.role !== "var") {
      parameterCount += tensor.data.length;
    }
    if (spec.role === "var") {
      for (const v of tensor.data) {
        if (!(v > 0)) {
          throw new ExportError(
            `tensor ${spec.name}: running variance must be > 0`);
        }
      }
    }
    tensors.push({ name: spec.name, tensor });
  }
  const unmapped = [...checkpoint.keys()]
    .filter((name) => !used.has(name))
    .sort();
  return {
    ovw1: buildOvw1(tensors),
    report: { mapped: used.size, unmappedUpstream: unmapped,
              parameterCount },
  };
}

export function mergeConfig(
  overrides?: Partial<ModelConfig>,
): ModelConfig {
  const cfg = { ...DEFAULT_CONFIG, ...(overrides ?? {}) };
  const known = new Set(Object.keys(DEFAULT_CONFIG));
  for (const key of Object.keys(overrides ?? {})) {
    if (!known.has(key)) {
      throw new ExportError(`unknown config field ${key}`);
    }
  }
  return cfg;
}
