#!/usr/bin/env node
/** Command-line entry.
 *
 *   export        --checkpoint FILE --out FILE [--config-override JSON]
 *                 [--name-map FILE]
 *   emit-fixtures --out DIR [--seed N] [--upstream-outputs DIR]
 *                 [--config-override JSON]
 *   make-random   --out FILE [--seed N] [--config-override JSON]
 *
 * Exit codes: 0 ok, 1 conversion/data error, 2 usage error.
 */

import * as fs from "node:fs";

import { DEFAULT_CONFIG, countParameters } from "./config";
import { ExportError, exportCheckpoint, mergeConfig,
         readCheckpoint } from "./export";
import { emitFixtures } from "./fixtures";
import { buildNameMap } from "./namemap";
import { randomCheckpoint } from "./random";

interface Args {
  command?: string;
  checkpoint?: string;
  out?: string;
  seed: number;
  configOverride?: string;
  nameMap?: string;
  upstreamOutputs?: string;
}

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`);
  console.error(
    "usage: cli.js export --checkpoint F --out F [--config-override J]" +
    " [--name-map F]\n" +
    "       cli.js emit-fixtures --out DIR [--seed N]" +
    " [--upstream-outputs DIR]\n" +
    "       cli.js make-random --out F [--seed N]");
  process.exit(2);
}

function parseArgs(argv: string[]): Args {
  const args: Args = { seed: 0 };
  args.command = argv[0];
  for (let i = 1; i < argv.length; i++) {
    switch (argv[i]) {
      case "--checkpoint":
        args.checkpoint = argv[++i];
        break;
      case "--out":
        args.out = argv[++i];
        break;
      case "--seed":
        args.seed = parseInt(argv[++i], 10);
        break;
      case "--config-override":
        args.configOverride = argv[++i];
        break;
      case "--name-map":
        args.nameMap = argv[++i];
        break;
      case "--upstream-outputs":
        args.upstreamOutputs = argv[++i];
        break;
      default:
        usage(`unknown argument ${argv[i]}`);
    }
  }
  return args;
}

function main(): number {
  const args = parseArgs(process.argv.slice(2));
  const cfg = mergeConfig(
    args.configOverride ? JSON.parse(args.configOverride) : undefined);

  if (args.command === "export") {
    if (!args.checkpoint || !args.out) usage("export needs --checkpoint/--out");
    const overrides = args.nameMap
      ? JSON.parse(fs.readFileSync(args.nameMap, "utf8"))
      : undefined;
    const nameMap = buildNameMap(cfg, overrides);
    const checkpoint = readCheckpoint(fs.readFileSync(args.checkpoint));
    const { ovw1, report } = exportCheckpoint(checkpoint, cfg, nameMap);
    fs.writeFileSync(args.out, ovw1);
    console.log(
      `exported ${report.mapped} tensors ` +
      `(${report.parameterCount} parameters, ` +
      `${(report.parameterCount / 1e6).toFixed(2)}M) -> ${args.out}`);
    if (report.unmappedUpstream.length) {
      console.log(
        `unmapped upstream tensors (ignored): ` +
        report.unmappedUpstream.join(", "));
    }
    return 0;
  }

  if (args.command === "emit-fixtures") {
    if (!args.out) usage("emit-fixtures needs --out");
    const report = emitFixtures(args.out, cfg, args.seed,
                                args.upstreamOutputs);
    console.log(`wrote ${report.written.length} fixture files to ${args.out}`);
    if (!report.upstreamOutputsFound) {
      console.log(
        "SKIP: upstream reference outputs unavailable; wrote input " +
        "fixtures only. Engine cross-validation against upstream " +
        "activations needs --upstream-outputs DIR with " +
        "fixture{i}.stage{j}.npy / fixture{i}.velocity.npy files.");
    }
    return 0;
  }

  if (args.command === "make-random") {
    if (!args.out) usage("make-random needs --out");
    fs.writeFileSync(args.out, randomCheckpoint(cfg, args.seed));
    console.log(
      `wrote schema-complete random checkpoint (seed ${args.seed}, ` +
      `${countParameters(cfg)} parameters) -> ${args.out}`);
    return 0;
  }

  usage(`unknown command ${args.command ?? "(none)"}`);
}

try {
  process.exit(main());
} catch (err) {
  if (err instanceof ExportError) {
    console.error(`error: ${err.message}`);
    process.exit(1);
  }
  if (err instanceof Error) {
    console.error(`error: ${err.message}`);
    process.exit(1);
  }
  throw err;
}

export { DEFAULT_CONFIG };
