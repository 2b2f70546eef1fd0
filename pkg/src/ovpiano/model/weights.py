"""Named parameter store, weight schema, and the OVW1 container format.

OVW1 layout (all little-endian): magic "OVW1", u32 version=1, u32 tensor
count, then per tensor {u16 name length, UTF-8 name, u8 dtype (0 = f32,
1 = raw bytes), u8 ndim, ndim x u32 dims, row-major payload}, and a
trailing u32 CRC32 over all preceding bytes. A raw-bytes tensor named
"__config__" carries the ModelConfig as JSON.

Parameter naming walks the architecture: ``stem.cam0.branch1.weight``,
``stage2.collapse.bias``, ``velocity.cam0.att.mlp1.weight``, ... Batch
norms contribute ``gamma/beta`` (learnable) plus ``mean/var`` (running
statistics, excluded from parameter counts). Dropout sites hold no
tensors; they are inference no-ops by position (after ``bn_mid`` and
``bn_mlp`` activations in every stage).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .ops import CorruptWeightsError

OVW1_MAGIC = b"OVW1"
OVW1_VERSION = 1
CONFIG_TENSOR = "__config__"
DTYPE_F32 = 0
DTYPE_RAW = 1

#: Time width of the height-collapsing convolution at each stage head.
COLLAPSE_TIME_KERNEL = 3
#: Spatial kernel of the stem input convolution.
STEM_IN_KERNEL = (3, 3)


class CorruptFileError(ValueError):
    """Container-level damage: bad magic, version, CRC, or truncation."""


class WeightSchemaError(ValueError):
    """Tensor names/shapes do not match what the config requires."""


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    #: weight | bias | att_bias | gamma | beta | mean | var
    role: str
    #: inputs per output unit, for He initialization (weights only)
    fan_in: int | None = None

    @property
    def learnable(self) -> bool:
        return self.role not in ("mean", "var")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def _bn(name, channels):
    return [ParamSpec(f"{name}.gamma", (channels,), "gamma"),
            ParamSpec(f"{name}.beta", (channels,), "beta"),
            ParamSpec(f"{name}.mean", (channels,), "mean"),
            ParamSpec(f"{name}.var", (channels,), "var")]


def _sbn(name, channels, bands):
    return [ParamSpec(f"{name}.gamma", (channels, bands), "gamma"),
            ParamSpec(f"{name}.beta", (channels, bands), "beta"),
            ParamSpec(f"{name}.mean", (channels, bands), "mean"),
            ParamSpec(f"{name}.var", (channels, bands), "var")]


def _conv(name, c_out, c_in, kernel):
    kh, kw = kernel
    fan_in = c_in * kh * kw
    return [ParamSpec(f"{name}.weight", (c_out, c_in, kh, kw), "weight",
                      fan_in),
            ParamSpec(f"{name}.bias", (c_out,), "bias")]


def _cam(name, channels, branches, kernel, hidden):
    specs = []
    per_branch = channels // branches
    for j in range(branches):
        specs += _conv(f"{name}.branch{j}", per_branch, channels, kernel)
    specs.append(ParamSpec(f"{name}.att.mlp0.weight", (hidden, channels),
                           "weight", channels))
    specs.append(ParamSpec(f"{name}.att.mlp0.bias", (hidden,), "bias"))
    specs.append(ParamSpec(f"{name}.att.mlp1.weight", (channels, hidden),
                           "weight", hidden))
    # pre-sigmoid attention bias: initialized to 1 to open the gate
    specs.append(ParamSpec(f"{name}.att.mlp1.bias", (channels,), "att_bias"))
    return specs


def _stage(name, cfg: ModelConfig, in_channels, cam_count):
    c = cfg.stage_channels
    m = cfg.mlp_width
    k = cfg.keys
    branches = len(cfg.stage_cam_dilations)
    specs = _conv(f"{name}.conv_in", c, in_channels, (1, 1))
    specs += _bn(f"{name}.bn_in", c)
    for i in range(cam_count):
        specs += _cam(f"{name}.cam{i}", c, branches, cfg.stage_cam_kernel,
                      cfg.attention_hidden)
        specs += _bn(f"{name}.cam{i}.bn", c)
    specs += _conv(f"{name}.collapse", m, c, (k, COLLAPSE_TIME_KERNEL))
    specs += _bn(f"{name}.bn_mid", m)
    specs += _conv(f"{name}.mlp1", m, m, (1, 1))
    specs += _bn(f"{name}.bn_mlp", m)
    specs += _conv(f"{name}.mlp2", k, m, (1, 1))
    specs += _bn(f"{name}.sbn_out", k)   # one norm per key (height is 1)
    return specs


def schema(cfg: ModelConfig) -> list[ParamSpec]:
    """Every tensor the config requires, in canonical order."""
    s = cfg.stem_channels
    branches = len(cfg.stem_cam_dilations)
    specs = _sbn("stem.sbn_in", 2, cfg.mel_bins)
    specs += _conv("stem.conv_in", s, 2, STEM_IN_KERNEL)
    specs += _bn("stem.bn_in", s)
    for i in range(cfg.stem_cam_count):
        specs += _cam(f"stem.cam{i}", s, branches, cfg.stem_cam_kernel,
                      cfg.attention_hidden)
        specs += _bn(f"stem.cam{i}.bn", s)
    specs.append(ParamSpec("stem.depth.weight",
                           (s, cfg.keys, cfg.mel_bins), "weight",
                           cfg.mel_bins))
    specs.append(ParamSpec("stem.depth.bias", (s, cfg.keys), "bias"))
    specs += _bn("stem.bn_out", s)
    for name in cfg.stage_names():
        specs += _stage(name, cfg, cfg.stem_channels, cfg.stage_cam_count)
    specs += _stage("velocity", cfg, cfg.velocity_in_channels,
                    cfg.velocity_cam_count)
    return specs


def count_parameters(cfg: ModelConfig) -> int:
    """Learnable scalars only; BN running statistics excluded."""
    return sum(spec.size for spec in schema(cfg) if spec.learnable)


class ModelWeights:
    """Immutable-after-load mapping of parameter names to f32 arrays."""

    def __init__(self, cfg: ModelConfig, arrays: dict[str, np.ndarray],
                 layout: list[str] | None = None,
                 config_raw: bytes | None = None):
        self.config = cfg
        self.arrays = {name: np.ascontiguousarray(a, dtype=np.float32)
                       for name, a in arrays.items()}
        self.layout = list(layout) if layout is not None \
            else [CONFIG_TENSOR] + list(self.arrays)
        # original config payload, kept so save(load(b)) is byte-exact
        # even for externally produced JSON formatting
        self.config_raw = config_raw if config_raw is not None \
            else cfg.to_json().encode("utf-8")

    def get(self, name: str, dtype=np.float32) -> np.ndarray:
        try:
            arr = self.arrays[name]
        except KeyError:
            raise WeightSchemaError(f"missing tensor {name!r}") from None
        return arr if dtype == np.float32 else arr.astype(dtype)

    def __contains__(self, name):
        return name in self.arrays

    def validate(self):
        """Check names/shapes against the config schema; var positivity."""
        specs = {spec.name: spec for spec in schema(self.config)}
        missing = sorted(set(specs) - set(self.arrays))
        extra = sorted(set(self.arrays) - set(specs))
        if missing or extra:
            raise WeightSchemaError(
                f"schema mismatch: missing {missing}, unexpected {extra}")
        for name, spec in specs.items():
            got = self.arrays[name].shape
            if got != spec.shape:
                raise WeightSchemaError(
                    f"tensor {name!r} has shape {got}, expected {spec.shape}")
            if spec.role == "var" and np.min(self.arrays[name]) <= 0:
                raise CorruptWeightsError(
                    f"tensor {name!r}: running variance must be > 0")
        return self

    def learnable_parameter_count(self) -> int:
        return sum(self.arrays[s.name].size for s in schema(self.config)
                   if s.learnable)


def save_weights(weights: ModelWeights) -> bytes:
    out = bytearray()
    out += OVW1_MAGIC
    out += struct.pack("<II", OVW1_VERSION, len(weights.layout))
    for name in weights.layout:
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        if name == CONFIG_TENSOR:
            payload = weights.config_raw
            out += struct.pack("<BB", DTYPE_RAW, 1)
            out += struct.pack("<I", len(payload))
            out += payload
        else:
            arr = weights.get(name)
            out += struct.pack("<BB", DTYPE_F32, arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += arr.astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Cursor:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CorruptFileError(
                f"truncated OVW1 file at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(data: bytes, validate: bool = True) -> ModelWeights:
    if len(data) < 16:
        raise CorruptFileError("file too short for an OVW1 container")
    if data[:4] != OVW1_MAGIC:
        raise CorruptFileError("bad magic (not an OVW1 file)")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4])
    if stored_crc != actual_crc:
        raise CorruptFileError(
            f"CRC mismatch: stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x}")

    cur = _Cursor(data[:-4])
    cur.take(4)
    version, count = cur.unpack("<II")
    if version != OVW1_VERSION:
        raise CorruptFileError(f"unsupported OVW1 version {version}")

    arrays = {}
    layout = []
    config_json = None
    for _ in range(count):
        name_len, = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        dtype, ndim = cur.unpack("<BB")
        dims = cur.unpack(f"<{ndim}I")
        if name in arrays or (name == CONFIG_TENSOR and config_json):
            raise WeightSchemaError(f"duplicate tensor {name!r}")
        if dtype == DTYPE_RAW:
            payload = cur.take(int(np.prod(dims)))
            if name != CONFIG_TENSOR:
                raise WeightSchemaError(
                    f"unexpected raw-bytes tensor {name!r}")
            config_json = payload.decode("utf-8")
        elif dtype == DTYPE_F32:
            n = int(np.prod(dims))
            payload = cur.take(4 * n)
            arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(dims)
        else:
            raise CorruptFileError(f"unknown dtype {dtype} for {name!r}")
        layout.append(name)
    if cur.pos != len(cur.data):
        raise CorruptFileError(
            f"{len(cur.data) - cur.pos} trailing bytes after tensors")
    if config_json is None:
        raise WeightSchemaError(f"missing {CONFIG_TENSOR!r} tensor")

    try:
        cfg = ModelConfig.from_json(config_json)
    except (ValueError, TypeError) as exc:
        raise WeightSchemaError(f"bad embedded config: {exc}") from exc
    weights = ModelWeights(cfg, arrays, layout,
                           config_raw=config_json.encode("utf-8"))
    return weights.validate() if validate else weights
