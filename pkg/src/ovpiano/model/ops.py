"""Tensor kernels for CPU inference: conv2d, batch norms, activations.

All kernels take/return rank-4 arrays shaped (batch, channels, height,
width) and are stride-1 cross-correlations with zero padding. conv2d
reduces each kernel tap to a BLAS matmul over the flattened spatial
extent, so no im2col buffer larger than the output is ever built;
reduction order is fixed, making results deterministic.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    pass


class CorruptWeightsError(ValueError):
    pass


#: largest scratch buffer a single conv call may allocate before the
#: width axis is tiled (keeps the working set cache/RAM friendly).
_CONV_SCRATCH_CAP = 128 * 1024 * 1024


def _conv_group(xg, kg, dilation, h_out, w_out, use_im2col):
    """Unpadded single-group convolution in one of two GEMM layouts.

    im2col gathers input patches into a (Cin*KH*KW, H_out*W_out) matrix
    for one well-shaped GEMM (wins for tall kernels like the K x 3 head).
    The tap-product path runs one (Cout*KH*KW, Cin) GEMM and accumulates
    shifted slices (wins for small-channel dilated kernels where im2col
    would dwarf the input).
    """
    b, c_in, hp, wp = xg.shape
    c_out, _, kh, kw = kg.shape
    dh, dw = dilation
    taps = kh * kw
    if taps == 1:
        flat = kg.reshape(c_out, c_in) @ xg.reshape(b, c_in, -1)
        return flat.reshape(b, c_out, h_out, w_out)

    if use_im2col:
        cols = np.empty((b, c_in * taps, h_out * w_out), dtype=xg.dtype)
        row = 0
        for c in range(c_in):
            for i in range(kh):
                for j in range(kw):
                    patch = xg[:, c, i * dh:i * dh + h_out,
                               j * dw:j * dw + w_out]
                    cols[:, row] = patch.reshape(b, -1)
                    row += 1
        flat = kg.reshape(c_out, -1) @ cols
        return flat.reshape(b, c_out, h_out, w_out)

    weights = kg.transpose(0, 2, 3, 1).reshape(c_out * taps, c_in)
    prod = (weights @ xg.reshape(b, c_in, -1)) \
        .reshape(b, c_out, kh, kw, hp, wp)
    out = np.zeros((b, c_out, h_out, w_out), dtype=xg.dtype)
    for i in range(kh):
        for j in range(kw):
            out += prod[:, :, i, j, i * dh:i * dh + h_out,
                        j * dw:j * dw + w_out]
    return out


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None,
           dilation=(1, 1), padding=(0, 0), groups: int = 1,
           name: str = "conv2d") -> np.ndarray:
    """Stride-1 zero-padded cross-correlation.

    x: (B, Cin, H, W); kernel: (Cout, Cin/groups, KH, KW). Output spatial
    dims are H + 2*ph - dh*(KH-1) (and likewise for width); padding
    equal to dilation*(k-1)/2 preserves shape.
    """
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"{name}: need rank-4 input/kernel, "
                         f"got {x.shape} / {kernel.shape}")
    b, c_in, h, w = x.shape
    c_out, c_k, kh, kw = kernel.shape
    dh, dw = dilation
    ph, pw = padding
    if groups < 1 or c_in % groups or c_out % groups:
        raise ShapeError(f"{name}: channels {c_in}->{c_out} not divisible "
                         f"by groups={groups}")
    if c_k != c_in // groups:
        raise ShapeError(f"{name}: kernel expects {c_k} in-channels/group, "
                         f"input has {c_in // groups}")
    h_out = h + 2 * ph - dh * (kh - 1)
    w_out = w + 2 * pw - dw * (kw - 1)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"{name}: kernel {kh}x{kw} dilation {dilation} "
                         f"too large for padded input {h + 2 * ph}x{w + 2 * pw}")

    if ph or pw:
        xp = np.zeros((b, c_in, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
        xp[:, :, ph:ph + h, pw:pw + w] = x
    else:
        xp = x

    cg_in = c_in // groups
    cg_out = c_out // groups
    taps = kh * kw
    use_im2col = cg_in * h_out * w_out <= cg_out * (h + 2 * ph) * (w + 2 * pw)
    if use_im2col:
        scratch_per_col = b * cg_in * taps * h_out * x.dtype.itemsize
    else:
        scratch_per_col = b * cg_out * taps * (h + 2 * ph) * x.dtype.itemsize
    tile = max(1, min(w_out, _CONV_SCRATCH_CAP // max(1, scratch_per_col)))
    halo = dw * (kw - 1)

    out = np.empty((b, c_out, h_out, w_out), dtype=x.dtype)
    for g in range(groups):
        xg = xp[:, g * cg_in:(g + 1) * cg_in]
        kg = kernel[g * cg_out:(g + 1) * cg_out]
        for t0 in range(0, w_out, tile):
            t1 = min(t0 + tile, w_out)
            seg = xg[:, :, :, t0:t1 + halo]
            if tile < w_out:
                seg = np.ascontiguousarray(seg)
            out[:, g * cg_out:(g + 1) * cg_out, :, t0:t1] = \
                _conv_group(seg, kg, dilation, h_out, t1 - t0, use_im2col)
    if bias is not None:
        out += np.asarray(bias).reshape(1, c_out, 1, 1)
    return out


def batchnorm_infer(x, gamma, beta, mean, var, eps: float = 1e-5,
                    name: str = "bn"):
    """Per-channel affine normalization with frozen running statistics."""
    gamma, beta, mean, var = (np.asarray(a, dtype=x.dtype)
                              for a in (gamma, beta, mean, var))
    if np.min(var) <= 0:
        raise CorruptWeightsError(f"{name}: non-positive running variance")
    scale = gamma / np.sqrt(var + eps)
    shape = (1, -1, 1, 1)
    return x * scale.reshape(shape) + (beta - mean * scale).reshape(shape)


def subspectral_bn(x, gamma, beta, mean, var, eps: float = 1e-5,
                   name: str = "sbn"):
    """One independent BN per (channel, height band).

    Parameters are (C, H) arrays; each vertical band normalizes with its
    own statistics, per-channel within the band.
    """
    gamma, beta, mean, var = (np.asarray(a, dtype=x.dtype)
                              for a in (gamma, beta, mean, var))
    if gamma.shape != x.shape[1:3]:
        raise ShapeError(f"{name}: params {gamma.shape} do not match "
                         f"(C, H) = {x.shape[1:3]}")
    if np.min(var) <= 0:
        raise CorruptWeightsError(f"{name}: non-positive running variance")
    scale = gamma / np.sqrt(var + eps)
    shape = (1,) + gamma.shape + (1,)
    return x * scale.reshape(shape) + (beta - mean * scale).reshape(shape)


def leaky_relu(x, slope: float = 0.1):
    return np.where(x >= 0, x, x * np.asarray(slope, dtype=x.dtype))


def sigmoid(x):
    return expit(x)


def global_avg_pool(x) -> np.ndarray:
    """(B, C, H, W) -> (B, C) mean over space, accumulated in float64."""
    return x.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)


def depthwise_band_map(x, weight, bias, name: str = "depth"):
    """Per-channel frame-wise linear map over the height axis.

    weight: (C, H_out, H_in) gives each channel its own dense band
    mixing (temporal kernel width 1); bias: (C, H_out). This realizes
    the single-step spectrogram-to-keys transition.
    """
    if x.shape[1] != weight.shape[0] or x.shape[2] != weight.shape[2]:
        raise ShapeError(f"{name}: input {x.shape} incompatible with "
                         f"weight {weight.shape}")
    out = np.einsum("ckf,bcft->bckt", weight.astype(x.dtype), x,
                    optimize=True)
    return out + bias.astype(x.dtype)[None, :, :, None]
