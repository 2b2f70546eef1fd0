/** Engine model configuration and the tensor schema it implies.
 *
 * This mirrors the engine's OVW1 contract: tensor names walk the
 * architecture (stem.cam0.branch1.weight, stage2.collapse.bias, ...)
 * and batch norms contribute gamma/beta plus running mean/var.
 */

export interface ModelConfig {
  mel_bins: number;
  keys: number;
  stem_channels: number;
  stage_channels: number;
  mlp_width: number;
  attention_hidden: number;
  stem_cam_count: number;
  stem_cam_dilations: number[];
  stem_cam_kernel: [number, number];
  stage_cam_count: number;
  stage_cam_dilations: number[];
  stage_cam_kernel: [number, number];
  velocity_cam_count: number;
  onset_stage_count: number;
  leaky_slope: number;
  residual_domain: string;
}

export const DEFAULT_CONFIG: ModelConfig = {
  mel_bins: 229,
  keys: 88,
  stem_channels: 16,
  stage_channels: 12,
  mlp_width: 200,
  attention_hidden: 8,
  stem_cam_count: 3,
  stem_cam_dilations: [1, 2, 3, 4],
  stem_cam_kernel: [3, 5],
  stage_cam_count: 3,
  stage_cam_dilations: [1, 2, 3],
  stage_cam_kernel: [1, 11],
  velocity_cam_count: 1,
  onset_stage_count: 3,
  leaky_slope: 0.1,
  residual_domain: "logit",
};

const COLLAPSE_TIME_KERNEL = 3;
const STEM_IN_KERNEL: [number, number] = [3, 3];

export interface ParamSpec {
  name: string;
  shape: number[];
  /** weight | bias | att_bias | gamma | beta | mean | var */
  role: string;
}

function bn(name: string, channels: number): ParamSpec[] {
  return [
    { name: `${name}.gamma`, shape: [channels], role: "gamma" },
    { name: `${name}.beta`, shape: [channels], role: "beta" },
    { name: `${name}.mean`, shape: [channels], role: "mean" },
    { name: `${name}.var`, shape: [channels], role: "var" },
  ];
}

function sbn(name: string, channels: number, bands: number): ParamSpec[] {
  return [
    { name: `${name}.gamma`, shape: [channels, bands], role: "gamma" },
    { name: `${name}.beta`, shape: [channels, bands], role: "beta" },
    { name: `${name}.mean`, shape: [channels, bands], role: "mean" },
    { name: `${name}.var`, shape: [channels, bands], role: "var" },
  ];
}

function conv(
  name: string,
  cOut: number,
  cIn: number,
  kernel: [number, number],
): ParamSpec[] {
  return [
    { name: `${name}.weight`, shape: [cOut, cIn, kernel[0], kernel[1]],
      role: "weight" },
    { name: `${name}.bias`, shape: [cOut], role: "bias" },
  ];
}

function cam(
  name: string,
  channels: number,
  branches: number,
  kernel: [number, number],
  hidden: number,
): ParamSpec[] {
  const specs: ParamSpec[] = [];
  const perBranch = channels / branches;
  for (let j = 0; j < branches; j++) {
    specs.push(...conv(`${name}.branch${j}`, perBranch, channels, kernel));
  }
  specs.push({ name: `${name}.att.mlp0.weight`, shape: [hidden, channels],
               role: "weight" });
  specs.push({ name: `${name}.att.mlp0.bias`, shape: [hidden],
               role: "bias" });
  specs.push({ name: `${name}.att.mlp1.weight`, shape: [channels, hidden],
               role: "weight" });
  specs.push({ name: `${name}.att.mlp1.bias`, shape: [channels],
               role: "att_bias" });
  return specs;
}

function stage(
  name: string,
  cfg: ModelConfig,
  inChannels: number,
  camCount: number,
): ParamSpec[] {
  const c = cfg.stage_channels;
  const m = cfg.mlp_width;
  const k = cfg.keys;
  const branches = cfg.stage_cam_dilations.length;
  const specs = conv(`${name}.conv_in`, c, inChannels, [1, 1]);
  specs.push(...bn(`${name}.bn_in`, c));
  for (let i = 0; i < camCount; i++) {
    specs.push(...cam(`${name}.cam${i}`, c, branches, cfg.stage_cam_kernel,
                      cfg.attention_hidden));
    specs.push(...bn(`${name}.cam${i}.bn`, c));
  }
  specs.push(...conv(`${name}.collapse`, m, c, [k, COLLAPSE_TIME_KERNEL]));
  specs.push(...bn(`${name}.bn_mid`, m));
  specs.push(...conv(`${name}.mlp1`, m, m, [1, 1]));
  specs.push(...bn(`${name}.bn_mlp`, m));
  specs.push(...conv(`${name}.mlp2`, k, m, [1, 1]));
  specs.push(...bn(`${name}.sbn_out`, k));
  return specs;
}

export function schema(cfg: ModelConfig): ParamSpec[] {
  const s = cfg.stem_channels;
  const branches = cfg.stem_cam_dilations.length;
  const specs = sbn("stem.sbn_in", 2, cfg.mel_bins);
  specs.push(...conv("stem.conv_in", s, 2, STEM_IN_KERNEL));
  specs.push(...bn("stem.bn_in", s));
  for (let i = 0; i < cfg.stem_cam_count; i++) {
    specs.push(...cam(`stem.cam${i}`, s, branches, cfg.stem_cam_kernel,
                      cfg.attention_hidden));
    specs.push(...bn(`stem.cam${i}.bn`, s));
  }
  specs.push({ name: "stem.depth.weight",
               shape: [s, cfg.keys, cfg.mel_bins], role: "weight" });
  specs.push({ name: "stem.depth.bias", shape: [s, cfg.keys], role: "bias" });
  specs.push(...bn("stem.bn_out", s));
  for (let i = 0; i < cfg.onset_stage_count; i++) {
    specs.push(...stage(`stage${i}`, cfg, s, cfg.stage_cam_count));
  }
  specs.push(...stage("velocity", cfg, s + 1, cfg.velocity_cam_count));
  return specs;
}

export function countParameters(cfg: ModelConfig): number {
  return schema(cfg)
    .filter((s) => s.role !== "mean" && s.role !== "var")
    .reduce((acc, s) => acc + s.shape.reduce((a, b) => a * b, 1), 0);
}

/** Engine-compatible JSON: sorted keys, matching the Python dataclass. */
export function configJson(cfg: ModelConfig): string {
  const sorted: Record<string, unknown> = {};
  for (const key of Object.keys(cfg).sort()) {
    sorted[key] = (cfg as unknown as Record<string, unknown>)[key];
  }
  return JSON.stringify(sorted);
}
