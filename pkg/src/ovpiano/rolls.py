"""Piano-roll grids and score quantization onto the 24 ms frame grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .score import FRAME_PERIOD_S, NUM_KEYS, Score


@dataclass(frozen=True)
class PianoRoll:
    """A keys x frames grid of per-key activity values in [0, 1].

    Row k holds piano key k+1; column t' covers the window centered at
    t' * frame_period_s.
    """

    values: np.ndarray
    frame_period_s: float = FRAME_PERIOD_S

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"roll must be 2-D, got shape {v.shape}")
        if self.frame_period_s <= 0:
            raise ValueError("frame_period_s must be > 0")
        if v.size and (np.min(v) < 0.0 or np.max(v) > 1.0):
            raise ValueError("roll values outside [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def keys(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


def time_to_frame(t_s: float, frame_period_s: float) -> int:
    """Map a time to its frame index, rounding half-up.

    Half-up keeps the assignment deterministic on the +/- half-frame
    window boundary (0.036 s at 24 ms lands on frame 2, not 1). The
    epsilon absorbs binary-representation dirt in the quotient (0.036 /
    0.024 evaluates below 1.5) and is far above quotient ulp for any
    realistic recording length.
    """
    return int(math.floor(t_s / frame_period_s + 0.5 + 1e-9))


class QuantizedRolls:
    """Onset, extended-onset and velocity rolls for one score.

    Iterates as the (onset, extended, velocity) triple. ``collisions``
    counts same-key onsets whose extents overlapped on the grid (the
    later onset's velocity wins on the overlapped frames).
    """

    def __init__(self, onset_roll, extended_roll, velocity_roll, collisions=0):
        self.onset_roll = onset_roll
        self.extended_roll = extended_roll
        self.velocity_roll = velocity_roll
        self.collisions = collisions

    def __iter__(self):
        return iter((self.onset_roll, self.extended_roll, self.velocity_roll))


def quantize(score: Score, frame_period_s: float = FRAME_PERIOD_S,
             extend: int = 2) -> QuantizedRolls:
    """Quantize a score into onset / extended-onset / velocity rolls.

    Each onset activates frame round(onset / dt); the extended roll
    additionally activates the ``extend`` following frames. The rolls are
    sized to fit every onset and its extension (never truncated).
    """
    if frame_period_s <= 0:
        raise ValueError("frame_period_s must be > 0")
    if extend < 0:
        raise ValueError("extend must be >= 0")

    frames = int(math.floor(score.duration_s / frame_period_s)) + 1
    events = [(time_to_frame(e.onset_s, frame_period_s), e) for e in score]
    if events:
        frames = max(frames, max(t for t, _ in events) + extend + 1)

    onset = np.zeros((NUM_KEYS, frames), dtype=np.float64)
    extended = np.zeros_like(onset)
    velocity = np.zeros_like(onset)

    collisions = 0
    # Events arrive onset-sorted, so later onsets overwrite overlapped
    # velocity frames of an earlier same-key neighbour.
    for t, ev in events:
        k = ev.key - 1
        stop = min(t + extend + 1, frames)
        if extended[k, t:stop].any():
            collisions += 1
        onset[k, t] = 1.0
        extended[k, t:stop] = 1.0
        velocity[k, t:stop] = ev.velocity

    return QuantizedRolls(
        PianoRoll(onset, frame_period_s),
        PianoRoll(extended, frame_period_s),
        PianoRoll(velocity, frame_period_s),
        collisions,
    )
