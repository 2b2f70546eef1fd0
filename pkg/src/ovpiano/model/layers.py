"""Network building blocks: context-attention blocks, stem, stages."""

from __future__ import annotations

import numpy as np

from .config import ConfigError, ModelConfig
from .ops import (ShapeError, batchnorm_infer, conv2d, depthwise_band_map,
                  global_avg_pool, leaky_relu, sigmoid, subspectral_bn)
from .weights import COLLAPSE_TIME_KERNEL, ModelWeights, STEM_IN_KERNEL


def _p(w: ModelWeights, name: str, dtype):
    return w.get(name, dtype)


def _bn(x, w, name):
    return batchnorm_infer(x, _p(w, f"{name}.gamma", x.dtype),
                           _p(w, f"{name}.beta", x.dtype),
                           _p(w, f"{name}.mean", x.dtype),
                           _p(w, f"{name}.var", x.dtype), name=name)


def cam_forward(x: np.ndarray, w: ModelWeights, name: str,
                kernel: tuple[int, int], dilations: tuple[int, ...],
                ) -> np.ndarray:
    """Residual context block: x + attention * concat(dilated convs).

    The middle branches are parallel time-dilated convolutions, each
    producing channels/len(dilations) outputs, padded so shape is kept.
    The attention branch squeezes space with a global average pool and
    gates channels through a two-layer MLP with sigmoid output.
    """
    channels = x.shape[1]
    if channels % len(dilations):
        raise ConfigError(f"{name}: {channels} channels not divisible by "
                          f"{len(dilations)} branches")
    kh, kw = kernel
    branches = []
    for j, dil in enumerate(dilations):
        pad = ((kh - 1) // 2, dil * (kw - 1) // 2)
        branches.append(conv2d(
            x, _p(w, f"{name}.branch{j}.weight", x.dtype),
            _p(w, f"{name}.branch{j}.bias", x.dtype),
            dilation=(1, dil), padding=pad, name=f"{name}.branch{j}"))
    mixed = np.concatenate(branches, axis=1)

    pooled = global_avg_pool(x)
    hidden = pooled @ _p(w, f"{name}.att.mlp0.weight", x.dtype).T \
        + _p(w, f"{name}.att.mlp0.bias", x.dtype)
    hidden = np.maximum(hidden, 0)
    gate = hidden @ _p(w, f"{name}.att.mlp1.weight", x.dtype).T \
        + _p(w, f"{name}.att.mlp1.bias", x.dtype)
    attention = sigmoid(gate)[:, :, None, None]

    return x + attention * mixed


def stem_forward(x: np.ndarray, w: ModelWeights,
                 cfg: ModelConfig) -> np.ndarray:
    """(B, 2, F, T') features -> (B, stem_channels, K, T') embedding."""
    if x.ndim != 4 or x.shape[1] != 2 or x.shape[2] != cfg.mel_bins:
        raise ShapeError(f"stem expects (B, 2, {cfg.mel_bins}, T'), "
                         f"got {x.shape}")
    slope = cfg.leaky_slope
    y = subspectral_bn(x, _p(w, "stem.sbn_in.gamma", x.dtype),
                       _p(w, "stem.sbn_in.beta", x.dtype),
                       _p(w, "stem.sbn_in.mean", x.dtype),
                       _p(w, "stem.sbn_in.var", x.dtype), name="stem.sbn_in")
    kh, kw = STEM_IN_KERNEL
    y = conv2d(y, _p(w, "stem.conv_in.weight", x.dtype),
               _p(w, "stem.conv_in.bias", x.dtype),
               padding=((kh - 1) // 2, (kw - 1) // 2), name="stem.conv_in")
    y = leaky_relu(_bn(y, w, "stem.bn_in"), slope)
    for i in range(cfg.stem_cam_count):
        y = cam_forward(y, w, f"stem.cam{i}", cfg.stem_cam_kernel,
                        cfg.stem_cam_dilations)
        y = leaky_relu(_bn(y, w, f"stem.cam{i}.bn"), slope)
    y = depthwise_band_map(y, _p(w, "stem.depth.weight", x.dtype),
                           _p(w, "stem.depth.bias", x.dtype),
                           name="stem.depth")
    return leaky_relu(_bn(y, w, "stem.bn_out"), slope)


def stage_forward(x: np.ndarray, w: ModelWeights, cfg: ModelConfig,
                  name: str) -> np.ndarray:
    """One output stage: (B, C_in, K, T') -> (B, K, T') pre-sigmoid logits.

    A 1x1 projection and context blocks act per key; a full-height
    convolution then collapses the key axis and two 1x1 layers form an
    MLP sliding over time (dropout sites are inference no-ops).
    """
    expected_in = cfg.velocity_in_channels if name == "velocity" \
        else cfg.stem_channels
    if x.ndim != 4 or x.shape[1] != expected_in or x.shape[2] != cfg.keys:
        raise ShapeError(f"{name} expects (B, {expected_in}, {cfg.keys}, "
                         f"T'), got {x.shape}")
    slope = cfg.leaky_slope
    cam_count = cfg.velocity_cam_count if name == "velocity" \
        else cfg.stage_cam_count

    y = conv2d(x, _p(w, f"{name}.conv_in.weight", x.dtype),
               _p(w, f"{name}.conv_in.bias", x.dtype),
               name=f"{name}.conv_in")
    y = leaky_relu(_bn(y, w, f"{name}.bn_in"), slope)
    for i in range(cam_count):
        y = cam_forward(y, w, f"{name}.cam{i}", cfg.stage_cam_kernel,
                        cfg.stage_cam_dilations)
        y = leaky_relu(_bn(y, w, f"{name}.cam{i}.bn"), slope)
    y = conv2d(y, _p(w, f"{name}.collapse.weight", x.dtype),
               _p(w, f"{name}.collapse.bias", x.dtype),
               padding=(0, (COLLAPSE_TIME_KERNEL - 1) // 2),
               name=f"{name}.collapse")
    y = leaky_relu(_bn(y, w, f"{name}.bn_mid"), slope)
    y = conv2d(y, _p(w, f"{name}.mlp1.weight", x.dtype),
               _p(w, f"{name}.mlp1.bias", x.dtype), name=f"{name}.mlp1")
    y = leaky_relu(_bn(y, w, f"{name}.bn_mlp"), slope)
    y = conv2d(y, _p(w, f"{name}.mlp2.weight", x.dtype),
               _p(w, f"{name}.mlp2.bias", x.dtype), name=f"{name}.mlp2")
    y = _bn(y, w, f"{name}.sbn_out")    # per-key norm; height is 1 here
    return y[:, :, 0, :]
