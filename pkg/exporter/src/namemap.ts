/** Mapping from upstream checkpoint tensor names to OVW1 names.
 *
 * The exporter owns this map so upstream naming drift never leaks into
 * the engine format. The default follows the common module-tree
 * convention of training frameworks: norms store weight/bias plus
 * running_mean/running_var, attention MLPs sit at sequential indices
 * 0 and 2 (the activation occupies slot 1), and repeated blocks are
 * indexed (stem.cams.0.branches.1.weight, stages.2.collapse.bias).
 * Entries can be merged/overridden from a JSON file of
 * {"upstream.name": "ovw1.name"} pairs.
 */

import { ModelConfig, schema } from "./config";

const NORM_SUFFIX: Record<string, string> = {
  gamma: "weight",
  beta: "bias",
  mean: "running_mean",
  var: "running_var",
};

/** Default upstream name for one OVW1 tensor name. */
export function defaultUpstreamName(ovwName: string): string {
  const parts = ovwName.split(".");
  const leaf = parts[parts.length - 1];
  const mapped = NORM_SUFFIX[leaf] ?? leaf;
  const head = parts.slice(0, -1).join(".");
  let upstream = `${head}.${mapped}`;
  upstream = upstream.replace(/^stage(\d+)\./, "stages.$1.");
  upstream = upstream.replace(/\.cam(\d+)\./g, ".cams.$1.");
  upstream = upstream.replace(/\.branch(\d+)\./g, ".branches.$1.");
  upstream = upstream.replace(/\.att\.mlp0\./, ".att.0.");
  upstream = upstream.replace(/\.att\.mlp1\./, ".att.2.");
  return upstream;
}

export interface NameMap {
  /** upstream name -> OVW1 name, bijective over required entries */
  entries: Map<string, string>;
}

export function buildNameMap(
  cfg: ModelConfig,
  overrides?: Record<string, string>,
): NameMap {
  const entries = new Map<string, string>();
  for (const spec of schema(cfg)) {
    entries.set(defaultUpstreamName(spec.name), spec.name);
  }
  if (overrides) {
    for (const [upstream, ovw] of Object.entries(overrides)) {
      for (const [existing, target] of entries) {
        if (target === ovw) entries.delete(existing);
      }
      entries.set(upstream, ovw);
    }
  }
  const targets = new Set(entries.values());
  if (targets.size !== entries.size) {
    throw new Error("name map is not bijective after overrides");
  }
  return { entries };
}
