"""Full-network assembly, parameter accounting and receptive fields."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rolls import PianoRoll
from ..score import FRAME_PERIOD_S
from .config import ConfigError, ModelConfig
from .layers import stage_forward, stem_forward
from .ops import sigmoid
from .weights import (COLLAPSE_TIME_KERNEL, ModelWeights, STEM_IN_KERNEL,
                      count_parameters, schema)

__all__ = ["NetworkOutput", "ov_forward", "count_parameters",
           "receptive_field", "empirical_receptive_field", "probe_weights"]


@dataclass
class NetworkOutput:
    """Per-stage onset rolls plus the velocity roll, batch-first arrays.

    In the default logit residual domain, ``onset_logits[i]`` holds the
    accumulated pre-sigmoid sum of stages 0..i and ``onset_probs[i]``
    its sigmoid. In the clamped probability domain, logits are the raw
    per-stage outputs and probs the clamped running sums.
    """

    onset_logits: list = field(default_factory=list)
    onset_probs: list = field(default_factory=list)
    velocity_probs: np.ndarray | None = None
    frame_period_s: float = FRAME_PERIOD_S

    @property
    def stages(self) -> int:
        return len(self.onset_probs)

    def onset_roll(self, stage: int = -1, item: int = 0) -> PianoRoll:
        return PianoRoll(self.onset_probs[stage][item], self.frame_period_s)

    def velocity_roll(self, item: int = 0) -> PianoRoll:
        return PianoRoll(self.velocity_probs[item], self.frame_period_s)


def ov_forward(x: np.ndarray, weights: ModelWeights,
               active_stages: int | None = None,
               frame_period_s: float = FRAME_PERIOD_S) -> NetworkOutput:
    """Run stem, the first ``active_stages`` onset stages, and velocity.

    x is (2, F, T') or (B, 2, F, T'). Later onset stages refine earlier
    ones through the residual combination; the velocity stage sees the
    stem embedding stacked with the final onset probability roll.
    """
    cfg = weights.config
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    n = cfg.onset_stage_count if active_stages is None else active_stages
    if not 1 <= n <= cfg.onset_stage_count:
        raise ConfigError(f"active_stages={n} outside 1.."
                          f"{cfg.onset_stage_count}")

    s = stem_forward(x, weights, cfg)
    logits = []
    probs = []
    if cfg.residual_domain == "logit":
        acc = None
        for i in range(n):
            out = stage_forward(s, weights, cfg, f"stage{i}")
            acc = out if acc is None else acc + out
            logits.append(acc)
            probs.append(sigmoid(acc))
    else:
        total = None
        for i in range(n):
            out = stage_forward(s, weights, cfg, f"stage{i}")
            logits.append(out)
            p = sigmoid(out)
            total = p if total is None else total + p
            probs.append(np.clip(total, 0.0, 1.0))

    velocity_in = np.concatenate([s, probs[-1][:, None]], axis=1)
    velocity = sigmoid(stage_forward(velocity_in, weights, cfg, "velocity"))
    return NetworkOutput(logits, probs, velocity, frame_period_s)


def _cam_extent(dilations, kernel) -> int:
    return max(dilations) * (kernel[1] - 1)


def _stage_extent(cfg: ModelConfig, cam_count: int) -> int:
    return (cam_count * _cam_extent(cfg.stage_cam_dilations,
                                    cfg.stage_cam_kernel)
            + (COLLAPSE_TIME_KERNEL - 1))


def _stem_extent(cfg: ModelConfig) -> int:
    return ((STEM_IN_KERNEL[1] - 1)
            + cfg.stem_cam_count * _cam_extent(cfg.stem_cam_dilations,
                                               cfg.stem_cam_kernel))


def receptive_field(cfg: ModelConfig, component: str = "full") -> int:
    """Analytic temporal receptive field, in frames.

    1 + sum over layers of dilation * (kernel_width - 1); parallel
    dilation branches contribute their maximum. 'full' follows the
    longest input-to-output chain: stem -> onset stage -> velocity
    stage (the attention pools are global but carry no temporal
    localization, so they are excluded by convention).
    """
    extents = {
        "stem": _stem_extent(cfg),
        "stage_onset": _stage_extent(cfg, cfg.stage_cam_count),
        "stage_velocity": _stage_extent(cfg, cfg.velocity_cam_count),
    }
    if component in extents:
        return 1 + extents[component]
    if component == "full":
        return 1 + sum(extents.values())
    raise ConfigError(f"unknown component {component!r}")


def probe_weights(cfg: ModelConfig, seed: int = 0) -> ModelWeights:
    """Random weights that keep the empirical probe equal to the formula.

    Convolutions get He-scaled noise; attention MLPs are zeroed so the
    (global) pooled gate is a constant and cannot leak localization;
    norms are identity.
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    for spec in schema(cfg):
        if spec.role == "weight":
            if ".att." in spec.name:
                arrays[spec.name] = np.zeros(spec.shape, dtype=np.float32)
            else:
                std = np.sqrt(2.0 / spec.fan_in)
                arrays[spec.name] = rng.normal(
                    0.0, std, spec.shape).astype(np.float32)
        elif spec.role in ("bias", "att_bias", "beta", "mean"):
            arrays[spec.name] = np.zeros(spec.shape, dtype=np.float32)
        else:                           # gamma, var
            arrays[spec.name] = np.ones(spec.shape, dtype=np.float32)
    return ModelWeights(cfg, arrays).validate()


def empirical_receptive_field(cfg: ModelConfig, component: str = "full",
                              seed: int = 0, margin: int = 8) -> int:
    """Perturbation probe: bump one input frame, measure the output span.

    Runs in float64 so any influence shows as a nonzero difference;
    frames outside the light cone are computed identically and compare
    exactly equal.
    """
    weights = probe_weights(cfg, seed)
    frames = 2 * receptive_field(cfg, component) + 2 * margin + 1
    mid = frames // 2
    rng = np.random.default_rng(seed + 1)

    def span(forward, shape):
        base = rng.normal(0.0, 1.0, shape)
        bumped = base.copy()
        bumped[..., mid] += 1.0
        diff = forward(bumped) - forward(base)
        changed = np.flatnonzero(
            np.any(diff != 0.0, axis=tuple(range(diff.ndim - 1))))
        if changed.size == 0:
            return 0
        return int(changed[-1] - changed[0] + 1)

    if component == "stem":
        return span(lambda x: stem_forward(x, weights, cfg),
                    (1, 2, cfg.mel_bins, frames))
    if component == "stage_onset":
        return span(lambda x: stage_forward(x, weights, cfg, "stage0"),
                    (1, cfg.stem_channels, cfg.keys, frames))
    if component == "stage_velocity":
        return span(lambda x: stage_forward(x, weights, cfg, "velocity"),
                    (1, cfg.velocity_in_channels, cfg.keys, frames))
    if component == "full":
        return span(lambda x: ov_forward(x, weights).velocity_probs,
                    (1, 2, cfg.mel_bins, frames))
    raise ConfigError(f"unknown component {component!r}")
