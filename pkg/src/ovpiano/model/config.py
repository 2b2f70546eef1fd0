"""Architecture hyperparameters for the onset/velocity network."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Shapes and layer counts of the transcription CNN.

    Defaults reproduce the full-size model: a spectrogram stem feeding
    three residual onset stages plus one velocity stage, every context
    block mixing parallel time-dilated convolutions under channel
    attention.
    """

    mel_bins: int = 229
    keys: int = 88
    stem_channels: int = 16
    stage_channels: int = 12
    mlp_width: int = 200
    attention_hidden: int = 8
    stem_cam_count: int = 3
    stem_cam_dilations: tuple[int, ...] = (1, 2, 3, 4)
    stem_cam_kernel: tuple[int, int] = (3, 5)
    stage_cam_count: int = 3
    stage_cam_dilations: tuple[int, ...] = (1, 2, 3)
    stage_cam_kernel: tuple[int, int] = (1, 11)
    velocity_cam_count: int = 1
    onset_stage_count: int = 3
    leaky_slope: float = 0.1
    #: How successive onset stages combine: 'logit' accumulates
    #: pre-sigmoid and re-applies the sigmoid (keeps outputs in (0,1));
    #: 'probability' sums per-stage sigmoids and clamps to [0, 1].
    residual_domain: str = "logit"

    def __post_init__(self):
        object.__setattr__(self, "stem_cam_dilations",
                           tuple(self.stem_cam_dilations))
        object.__setattr__(self, "stage_cam_dilations",
                           tuple(self.stage_cam_dilations))
        object.__setattr__(self, "stem_cam_kernel",
                           tuple(self.stem_cam_kernel))
        object.__setattr__(self, "stage_cam_kernel",
                           tuple(self.stage_cam_kernel))
        if self.stem_channels % len(self.stem_cam_dilations):
            raise ConfigError(
                f"stem channels {self.stem_channels} not divisible by "
                f"{len(self.stem_cam_dilations)} dilation branches")
        if self.stage_channels % len(self.stage_cam_dilations):
            raise ConfigError(
                f"stage channels {self.stage_channels} not divisible by "
                f"{len(self.stage_cam_dilations)} dilation branches")
        if self.onset_stage_count < 1:
            raise ConfigError("need at least one onset stage")
        if self.residual_domain not in ("logit", "probability"):
            raise ConfigError(
                f"residual_domain must be logit|probability, "
                f"got {self.residual_domain!r}")
        for name in ("mel_bins", "keys", "stem_channels", "stage_channels",
                     "mlp_width", "attention_hidden", "stem_cam_count",
                     "stage_cam_count", "velocity_cam_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def velocity_in_channels(self) -> int:
        # stem output stacked with the final onset probability roll
        return self.stem_channels + 1

    def stage_names(self) -> list[str]:
        return [f"stage{i}" for i in range(self.onset_stage_count)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        raw = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


#: Small enough for finite-difference gradient checks (< 5k parameters).
MICRO_CONFIG = ModelConfig(
    mel_bins=8, keys=4, stem_channels=4, stage_channels=4, mlp_width=16,
    attention_hidden=4, stem_cam_count=1, stem_cam_dilations=(1, 2),
    stem_cam_kernel=(3, 3), stage_cam_count=1, stage_cam_dilations=(1, 2),
    stage_cam_kernel=(1, 3), velocity_cam_count=1, onset_stage_count=1,
)

#: Tiny enough for full finite-difference gradient descent (< 2k parameters).
TINY_CONFIG = ModelConfig(
    mel_bins=4, keys=2, stem_channels=2, stage_channels=2, mlp_width=8,
    attention_hidden=2, stem_cam_count=1, stem_cam_dilations=(1, 2),
    stem_cam_kernel=(3, 3), stage_cam_count=1, stage_cam_dilations=(1, 2),
    stage_cam_kernel=(1, 3), velocity_cam_count=1, onset_stage_count=1,
)
