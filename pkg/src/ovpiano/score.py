"""Event-level score representation: notes with key, velocity and timing."""

from __future__ import annotations

from dataclasses import dataclass, field

NUM_KEYS = 88
#: MIDI pitch of key 1 is 21 (A0), i.e. pitch = key + 20.
KEY_TO_PITCH_OFFSET = 20
FRAME_PERIOD_S = 0.024


@dataclass(frozen=True, order=True)
class NoteEvent:
    """A single played note.

    ``key`` is the piano key index in [1, 88] (MIDI pitch = key + 20),
    ``velocity`` the normalized strike intensity in [0, 1]. ``offset_s``
    may be None for onset-only events (e.g. decoder output).
    """

    onset_s: float
    key: int
    velocity: float
    offset_s: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= self.key <= NUM_KEYS:
            raise ValueError(f"key {self.key} outside [1, {NUM_KEYS}]")
        if not 0.0 <= self.velocity <= 1.0:
            raise ValueError(f"velocity {self.velocity} outside [0, 1]")
        if self.onset_s < 0:
            raise ValueError(f"negative onset {self.onset_s}")
        if self.offset_s is not None and self.offset_s <= self.onset_s:
            raise ValueError(
                f"offset {self.offset_s} not after onset {self.onset_s}")

    @property
    def pitch(self) -> int:
        return self.key + KEY_TO_PITCH_OFFSET


@dataclass(frozen=True)
class Score:
    """An ordered collection of note events plus a total duration."""

    events: tuple[NoteEvent, ...]
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        for a, b in zip(self.events, self.events[1:]):
            if (a.onset_s, a.key) > (b.onset_s, b.key):
                raise ValueError("events not sorted by (onset, key)")
        end = self.end_time()
        if self.duration_s < end:
            raise ValueError(
                f"duration {self.duration_s} shorter than last event {end}")

    @classmethod
    def from_events(cls, events, duration_s=None) -> "Score":
        """Build a Score, sorting events and defaulting the duration."""
        events = sorted(events, key=lambda e: (e.onset_s, e.key))
        if duration_s is None:
            duration_s = max(
                (e.offset_s if e.offset_s is not None else e.onset_s
                 for e in events),
                default=0.0)
        return cls(tuple(events), duration_s)

    def end_time(self) -> float:
        return max((e.offset_s if e.offset_s is not None else e.onset_s
                    for e in self.events), default=0.0)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)
