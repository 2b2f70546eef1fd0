import numpy as np
import pytest

from ovpiano.model.config import MICRO_CONFIG, ModelConfig
from ovpiano.model.layers import cam_forward, stage_forward, stem_forward
from ovpiano.model.ops import (ShapeError, conv2d, depthwise_band_map,
                               leaky_relu, sigmoid, subspectral_bn,
                               batchnorm_infer)
from ovpiano.training import he_init


def small_cam_config():
    return ModelConfig(
        mel_bins=8, keys=4, stem_channels=4, stage_channels=4, mlp_width=8,
        attention_hidden=4, stem_cam_count=1, stem_cam_dilations=(1, 2),
        stem_cam_kernel=(1, 3), stage_cam_count=1, stage_cam_dilations=(1, 2),
        stage_cam_kernel=(1, 3), velocity_cam_count=1, onset_stage_count=1)


def test_cam_zero_branches_is_identity():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=0)
    for j in range(2):
        weights.arrays[f"stem.cam0.branch{j}.weight"][:] = 0.0
        weights.arrays[f"stem.cam0.branch{j}.bias"][:] = 0.0
    x = np.random.default_rng(0).normal(
        size=(1, 4, 8, 10)).astype(np.float32)
    out = cam_forward(x, weights, "stem.cam0", cfg.stem_cam_kernel,
                      cfg.stem_cam_dilations)
    assert np.array_equal(out, x)


def test_cam_saturated_negative_attention_kills_branches():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=1)
    weights.arrays["stem.cam0.att.mlp0.weight"][:] = 0.0
    weights.arrays["stem.cam0.att.mlp0.bias"][:] = 0.0
    weights.arrays["stem.cam0.att.mlp1.weight"][:] = 0.0
    weights.arrays["stem.cam0.att.mlp1.bias"][:] = -60.0
    x = np.random.default_rng(1).normal(
        size=(1, 4, 8, 10)).astype(np.float32)
    out = cam_forward(x, weights, "stem.cam0", cfg.stem_cam_kernel,
                      cfg.stem_cam_dilations)
    assert np.abs(out - x).max() < 1e-6


def test_cam_against_hand_composition():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=2)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 4, 8, 12)).astype(np.float32)
    got = cam_forward(x, weights, "stem.cam0", (1, 3), (1, 2))

    w = {name: arr.astype(np.float64) for name, arr in weights.arrays.items()}
    xd = x.astype(np.float64)
    branches = []
    for j, dil in enumerate((1, 2)):
        branches.append(conv2d(xd, w[f"stem.cam0.branch{j}.weight"],
                               w[f"stem.cam0.branch{j}.bias"],
                               dilation=(1, dil), padding=(0, dil)))
    mixed = np.concatenate(branches, axis=1)
    pooled = xd.mean(axis=(2, 3))
    hidden = np.maximum(
        pooled @ w["stem.cam0.att.mlp0.weight"].T
        + w["stem.cam0.att.mlp0.bias"], 0.0)
    gate = sigmoid(hidden @ w["stem.cam0.att.mlp1.weight"].T
                   + w["stem.cam0.att.mlp1.bias"])
    ref = xd + gate[:, :, None, None] * mixed
    assert np.abs(got - ref).max() < 1e-5


def test_stem_output_shape():
    cfg = ModelConfig()
    weights = he_init(cfg, seed=0)
    x = np.zeros((1, 2, 229, 100), dtype=np.float32)
    out = stem_forward(x, weights, cfg)
    assert out.shape == (1, 16, 88, 100)


def test_stem_zero_conv_weights_gives_zero():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=4)
    for name, arr in weights.arrays.items():
        if name.startswith("stem.") and (
                name.endswith("weight") or name.endswith("bias")):
            arr[:] = 0.0
    x = np.random.default_rng(5).normal(
        size=(1, 2, 8, 9)).astype(np.float32)
    out = stem_forward(x, weights, cfg)
    assert np.abs(out).max() == 0.0


def test_stem_against_layer_by_layer_composition():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=6)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 2, 8, 11)).astype(np.float32)
    got = stem_forward(x, weights, cfg)

    w = weights.get
    y = subspectral_bn(x, w("stem.sbn_in.gamma"), w("stem.sbn_in.beta"),
                       w("stem.sbn_in.mean"), w("stem.sbn_in.var"))
    y = conv2d(y, w("stem.conv_in.weight"), w("stem.conv_in.bias"),
               padding=(1, 1))
    y = leaky_relu(batchnorm_infer(y, w("stem.bn_in.gamma"),
                                   w("stem.bn_in.beta"), w("stem.bn_in.mean"),
                                   w("stem.bn_in.var")), 0.1)
    y = cam_forward(y, weights, "stem.cam0", (1, 3), (1, 2))
    y = leaky_relu(batchnorm_infer(y, w("stem.cam0.bn.gamma"),
                                   w("stem.cam0.bn.beta"),
                                   w("stem.cam0.bn.mean"),
                                   w("stem.cam0.bn.var")), 0.1)
    y = depthwise_band_map(y, w("stem.depth.weight"), w("stem.depth.bias"))
    y = leaky_relu(batchnorm_infer(y, w("stem.bn_out.gamma"),
                                   w("stem.bn_out.beta"),
                                   w("stem.bn_out.mean"),
                                   w("stem.bn_out.var")), 0.1)
    assert np.abs(got - y).max() < 1e-5


def test_stem_rejects_wrong_height():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=0)
    with pytest.raises(ShapeError):
        stem_forward(np.zeros((1, 2, 7, 10), dtype=np.float32), weights, cfg)


def test_stage_output_shape():
    cfg = ModelConfig()
    weights = he_init(cfg, seed=0)
    x = np.zeros((1, 16, 88, 100), dtype=np.float32)
    out = stage_forward(x, weights, cfg, "stage0")
    assert out.shape == (1, 88, 100)


def test_stage_zero_weights_gives_zero_logits():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=8)
    for name, arr in weights.arrays.items():
        if name.startswith("stage0.") and (
                name.endswith("weight") or name.endswith("bias")):
            arr[:] = 0.0
    x = np.random.default_rng(9).normal(
        size=(1, 4, 4, 7)).astype(np.float32)
    logits = stage_forward(x, weights, cfg, "stage0")
    assert np.abs(logits).max() == 0.0
    assert np.allclose(sigmoid(logits), 0.5)


def test_stage_against_layer_by_layer_composition():
    cfg = small_cam_config()
    weights = he_init(cfg, seed=10)
    rng = np.random.default_rng(11)
    x = rng.normal(size=(1, 4, 4, 9)).astype(np.float32)
    got = stage_forward(x, weights, cfg, "stage0")

    w = weights.get

    def bn(y, prefix):
        return leaky_relu(batchnorm_infer(
            y, w(f"{prefix}.gamma"), w(f"{prefix}.beta"),
            w(f"{prefix}.mean"), w(f"{prefix}.var")), 0.1)

    y = conv2d(x, w("stage0.conv_in.weight"), w("stage0.conv_in.bias"))
    y = bn(y, "stage0.bn_in")
    y = cam_forward(y, weights, "stage0.cam0", (1, 3), (1, 2))
    y = bn(y, "stage0.cam0.bn")
    y = conv2d(y, w("stage0.collapse.weight"), w("stage0.collapse.bias"),
               padding=(0, 1))
    y = bn(y, "stage0.bn_mid")
    y = conv2d(y, w("stage0.mlp1.weight"), w("stage0.mlp1.bias"))
    y = bn(y, "stage0.bn_mlp")
    y = conv2d(y, w("stage0.mlp2.weight"), w("stage0.mlp2.bias"))
    y = batchnorm_infer(y, w("stage0.sbn_out.gamma"), w("stage0.sbn_out.beta"),
                        w("stage0.sbn_out.mean"), w("stage0.sbn_out.var"))
    assert np.abs(got - y[:, :, 0, :]).max() < 1e-5


def test_velocity_stage_input_channels():
    cfg = MICRO_CONFIG
    weights = he_init(cfg, seed=0)
    x = np.zeros((1, cfg.velocity_in_channels, cfg.keys, 6), dtype=np.float32)
    out = stage_forward(x, weights, cfg, "velocity")
    assert out.shape == (1, cfg.keys, 6)
    with pytest.raises(ShapeError, match="velocity"):
        stage_forward(np.zeros((1, cfg.stem_channels, cfg.keys, 6),
                               dtype=np.float32), weights, cfg, "velocity")
