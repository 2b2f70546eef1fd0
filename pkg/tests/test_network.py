import numpy as np
import pytest

from ovpiano.model.config import (MICRO_CONFIG, TINY_CONFIG, ConfigError,
                                  ModelConfig)
from ovpiano.model.network import (count_parameters,
                                   empirical_receptive_field, ov_forward,
                                   probe_weights, receptive_field)
from ovpiano.model.weights import schema
from ovpiano.training import he_init


def micro_param_count_by_hand(cfg: ModelConfig) -> int:
    """Closed-form layer-by-layer summation, independent of schema()."""
    def conv(co, ci, kh, kw):
        return co * ci * kh * kw + co

    def bn(c):
        return 2 * c

    def cam(c, branches, kh, kw, hidden):
        per = c // branches
        total = branches * conv(per, c, kh, kw)
        total += hidden * c + hidden          # mlp0
        total += c * hidden + c               # mlp1
        return total

    f, k = cfg.mel_bins, cfg.keys
    s, c, m = cfg.stem_channels, cfg.stage_channels, cfg.mlp_width
    a = cfg.attention_hidden
    skh, skw = cfg.stem_cam_kernel
    gkh, gkw = cfg.stage_cam_kernel
    sb, gb = len(cfg.stem_cam_dilations), len(cfg.stage_cam_dilations)

    stem = 2 * 2 * f                          # input SBN affine
    stem += conv(s, 2, 3, 3) + bn(s)
    stem += cfg.stem_cam_count * (cam(s, sb, skh, skw, a) + bn(s))
    stem += s * k * f + s * k                 # depthwise band map
    stem += bn(s)

    def stage(in_ch, cams):
        total = conv(c, in_ch, 1, 1) + bn(c)
        total += cams * (cam(c, gb, gkh, gkw, a) + bn(c))
        total += conv(m, c, k, 3) + bn(m)
        total += conv(m, m, 1, 1) + bn(m)
        total += conv(k, m, 1, 1) + bn(k)
        return total

    total = stem
    total += cfg.onset_stage_count * stage(s, cfg.stage_cam_count)
    total += stage(s + 1, cfg.velocity_cam_count)
    return total


def test_count_matches_hand_sum_micro():
    assert count_parameters(MICRO_CONFIG) == \
        micro_param_count_by_hand(MICRO_CONFIG)
    assert count_parameters(TINY_CONFIG) == \
        micro_param_count_by_hand(TINY_CONFIG)


def test_full_size_parameter_budget():
    n = count_parameters(ModelConfig())
    assert 3.13e6 * 0.98 <= n <= 3.13e6 * 1.02


def test_doubling_mlp_width_changes_count_by_closed_form_delta():
    cfg = ModelConfig()
    wide = ModelConfig(mlp_width=2 * cfg.mlp_width)
    m, c, k = cfg.mlp_width, cfg.stage_channels, cfg.keys
    # per stage: collapse out, its BN, mlp1 both sides + BN, mlp2 in
    per_stage = ((2 * m - m) * (c * k * 3 + 1 + 2)
                 + ((2 * m) ** 2 - m ** 2 + (2 * m - m))
                 + 2 * (2 * m - m)
                 + k * (2 * m - m))
    stages = cfg.onset_stage_count + 1
    assert count_parameters(wide) - count_parameters(cfg) \
        == stages * per_stage


def test_count_equals_stored_learnable_scalars():
    weights = he_init(MICRO_CONFIG, seed=0)
    assert weights.learnable_parameter_count() \
        == count_parameters(MICRO_CONFIG)
    stored = sum(a.size for a in weights.arrays.values())
    running = sum(s.size for s in schema(MICRO_CONFIG) if not s.learnable)
    assert stored == count_parameters(MICRO_CONFIG) + running


def test_receptive_field_analytic_values():
    cfg = ModelConfig()
    assert receptive_field(cfg, "stem") == 51
    assert receptive_field(cfg, "stage_onset") == 93
    assert receptive_field(cfg, "stage_velocity") == 33
    assert receptive_field(cfg, "full") == 175


def test_receptive_field_kernel_width_one():
    cfg = ModelConfig(
        mel_bins=8, keys=4, stem_channels=4, stage_channels=4, mlp_width=8,
        attention_hidden=2, stem_cam_count=1, stem_cam_dilations=(1, 2),
        stem_cam_kernel=(3, 1), stage_cam_count=1, stage_cam_dilations=(1, 2),
        stage_cam_kernel=(1, 1), velocity_cam_count=1, onset_stage_count=1)
    # stages still carry the K x 3 collapse; only the CAM widths are 1
    assert receptive_field(cfg, "stem") == 1 + 2
    assert receptive_field(cfg, "stage_onset") == 1 + 2


def test_empirical_matches_analytic_micro():
    for comp in ("stem", "stage_onset", "stage_velocity", "full"):
        assert empirical_receptive_field(MICRO_CONFIG, comp, seed=3) \
            == receptive_field(MICRO_CONFIG, comp)


def test_forward_single_stage_is_definition():
    weights = he_init(MICRO_CONFIG, seed=2)
    x = np.random.default_rng(0).normal(
        size=(2, MICRO_CONFIG.mel_bins, 20)).astype(np.float32)
    out = ov_forward(x, weights, active_stages=1)
    assert out.stages == 1
    from scipy.special import expit
    assert np.allclose(out.onset_probs[0], expit(out.onset_logits[0]))


def test_forward_zero_weights_gives_half_rolls():
    weights = he_init(MICRO_CONFIG, seed=0)
    for name, arr in weights.arrays.items():
        if name.endswith(".weight") or name.endswith(".bias"):
            arr[:] = 0.0
    x = np.random.default_rng(1).normal(
        size=(2, MICRO_CONFIG.mel_bins, 12)).astype(np.float32)
    out = ov_forward(x, weights)
    for probs in out.onset_probs:
        assert np.allclose(probs, 0.5)
    assert np.allclose(out.velocity_probs, 0.5)


def test_stage_prefix_property():
    cfg = ModelConfig(
        mel_bins=12, keys=6, stem_channels=4, stage_channels=4, mlp_width=8,
        attention_hidden=2, stem_cam_count=1, stem_cam_dilations=(1, 2),
        stem_cam_kernel=(3, 3), stage_cam_count=1, stage_cam_dilations=(1, 2),
        stage_cam_kernel=(1, 3), velocity_cam_count=1, onset_stage_count=3)
    weights = he_init(cfg, seed=5)
    x = np.random.default_rng(2).normal(
        size=(1, 2, cfg.mel_bins, 15)).astype(np.float32)
    full = ov_forward(x, weights, active_stages=3)
    partial = ov_forward(x, weights, active_stages=2)
    assert np.array_equal(full.onset_probs[0], partial.onset_probs[0])
    assert np.array_equal(full.onset_probs[1], partial.onset_probs[1])
    assert full.stages == 3 and partial.stages == 2


def test_active_stages_out_of_range():
    weights = he_init(MICRO_CONFIG, seed=0)
    x = np.zeros((2, MICRO_CONFIG.mel_bins, 8), dtype=np.float32)
    with pytest.raises(ConfigError):
        ov_forward(x, weights, active_stages=2)
    with pytest.raises(ConfigError):
        ov_forward(x, weights, active_stages=0)


def test_batch_consistency():
    weights = he_init(MICRO_CONFIG, seed=7)
    rng = np.random.default_rng(3)
    a = rng.normal(size=(1, 2, MICRO_CONFIG.mel_bins, 10)).astype(np.float32)
    b = rng.normal(size=(1, 2, MICRO_CONFIG.mel_bins, 10)).astype(np.float32)
    batched = ov_forward(np.concatenate([a, b]), weights)
    single_a = ov_forward(a, weights)
    single_b = ov_forward(b, weights)
    assert np.abs(batched.velocity_probs[0]
                  - single_a.velocity_probs[0]).max() < 1e-6
    assert np.abs(batched.velocity_probs[1]
                  - single_b.velocity_probs[0]).max() < 1e-6
    assert np.abs(batched.onset_probs[-1][0]
                  - single_a.onset_probs[-1][0]).max() < 1e-6


def test_probabilities_in_open_interval():
    weights = he_init(MICRO_CONFIG, seed=9)
    x = np.random.default_rng(4).normal(
        size=(1, 2, MICRO_CONFIG.mel_bins, 30)).astype(np.float32)
    out = ov_forward(x, weights)
    for probs in out.onset_probs + [out.velocity_probs]:
        assert np.all(probs > 0.0) and np.all(probs < 1.0)
        assert np.all(np.isfinite(probs))
    for logits in out.onset_logits:
        assert np.all(np.isfinite(logits))


def test_probability_residual_domain():
    cfg = ModelConfig(
        mel_bins=8, keys=4, stem_channels=4, stage_channels=4, mlp_width=8,
        attention_hidden=2, stem_cam_count=1, stem_cam_dilations=(1, 2),
        stem_cam_kernel=(3, 3), stage_cam_count=1, stage_cam_dilations=(1, 2),
        stage_cam_kernel=(1, 3), velocity_cam_count=1, onset_stage_count=2,
        residual_domain="probability")
    weights = he_init(cfg, seed=11)
    x = np.random.default_rng(5).normal(
        size=(1, 2, cfg.mel_bins, 9)).astype(np.float32)
    out = ov_forward(x, weights)
    from scipy.special import expit
    total = expit(out.onset_logits[0]) + expit(out.onset_logits[1])
    assert np.array_equal(out.onset_probs[1], np.clip(total, 0.0, 1.0))
    assert out.onset_probs[1].max() <= 1.0


def test_probe_weights_validate():
    probe_weights(MICRO_CONFIG, seed=0).validate()


def test_concurrent_inference_on_shared_weights():
    from concurrent.futures import ThreadPoolExecutor

    weights = he_init(MICRO_CONFIG, seed=13)
    rng = np.random.default_rng(6)
    inputs = [rng.normal(size=(2, MICRO_CONFIG.mel_bins, 12))
              .astype(np.float32) for _ in range(4)]
    expected = [ov_forward(x, weights).velocity_probs for x in inputs]
    with ThreadPoolExecutor(max_workers=4) as pool:
        got = list(pool.map(
            lambda x: ov_forward(x, weights).velocity_probs, inputs))
    for a, b in zip(expected, got):
        assert np.array_equal(a, b)
