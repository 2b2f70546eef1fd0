/** Forward-pass fixture packaging.
 *
 * Emits three seeded random network inputs as OVF1 matrices (the
 * 2 x bins x frames input is stored as a (2*bins) x frames matrix).
 * When a directory of upstream reference outputs is supplied (NPY
 * files named fixture{i}.stage{j}.npy / fixture{i}.velocity.npy,
 * produced by running the original training code in inference mode),
 * those are packaged alongside so the engine can be cross-validated.
 * Without upstream outputs the fixtures are input-only and the
 * cross-check is skipped -- the engine's own suite does not need it.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { ModelConfig } from "./config";
import { buildOvf1 } from "./ovf1";
import { parseNpy } from "./npy";
import { Rng } from "./random";

export const FIXTURE_COUNT = 3;
export const FIXTURE_FRAMES = 100;

export interface FixtureReport {
  written: string[];
  upstreamOutputsFound: boolean;
  skipped: string[];
}

export function emitFixtures(
  outDir: string,
  cfg: ModelConfig,
  seed: number,
  upstreamOutputsDir?: string,
): FixtureReport {
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  const skipped: string[] = [];
  const rng = new Rng(seed);
  for (let i = 0; i < FIXTURE_COUNT; i++) {
    const rows = 2 * cfg.mel_bins;
    const data = new Float32Array(rows * FIXTURE_FRAMES);
    for (let e = 0; e < data.length; e++) data[e] = Math.fround(rng.normal());
    const file = path.join(outDir, `fixture${i}.input.ovf1`);
    fs.writeFileSync(file, buildOvf1({ rows, cols: FIXTURE_FRAMES, data }));
    written.push(file);
  }

  let upstreamOutputsFound = false;
  const wanted: string[] = [];
  for (let i = 0; i < FIXTURE_COUNT; i++) {
    for (let j = 0; j < cfg.onset_stage_count; j++) {
      wanted.push(`fixture${i}.stage${j}`);
    }
    wanted.push(`fixture${i}.velocity`);
  }
  for (const stem of wanted) {
    const source = upstreamOutputsDir
      ? path.join(upstreamOutputsDir, `${stem}.npy`)
      : undefined;
    if (source && fs.existsSync(source)) {
      const tensor = parseNpy(fs.readFileSync(source));
      const [rows, cols] = tensor.shape.length === 2
        ? tensor.shape
        : [tensor.shape[tensor.shape.length - 2],
           tensor.shape[tensor.shape.length - 1]];
      const file = path.join(outDir, `${stem}.ovf1`);
      fs.writeFileSync(file, buildOvf1({ rows, cols, data: tensor.data }));
      written.push(file);
      upstreamOutputsFound = true;
    } else {
      skipped.push(stem);
    }
  }
  return { written, upstreamOutputsFound, skipped };
}
