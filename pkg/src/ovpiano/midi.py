"""Standard MIDI file reading and writing for piano note events.

Reads format 0/1 files with full tempo-map handling and writes format 0
files at a fixed 120 BPM / 960 PPQ grid (consumers only need absolute
times). Velocities are normalized to [0, 1] by dividing by 127.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

from .score import NoteEvent, Score

log = logging.getLogger(__name__)

PITCH_MIN = 21
PITCH_MAX = 108
VELOCITY_SCALE = 127.0

WRITE_PPQ = 960
WRITE_TEMPO_US = 500_000          # 120 BPM
WRITE_TICKS_PER_S = WRITE_PPQ * 1_000_000 / WRITE_TEMPO_US
#: Synthetic duration for onset-only events (the decoder emits no offsets).
DEFAULT_NOTE_LEN_S = 0.25

DEFAULT_TEMPO_US = 500_000


class MidiParseError(ValueError):
    """Malformed MIDI data; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class MidiReport:
    """Counters for recoverable oddities found while parsing."""

    dropped_out_of_range: int = 0
    unmatched_note_ons: int = 0
    dropped_pitches: list = field(default_factory=list)


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiParseError("unexpected end of data", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiParseError("variable-length quantity too long", self.pos)


def _parse_track(reader: _Reader):
    """Yield (tick, kind, data) tuples for one MTrk chunk body.

    kind is 'on', 'off' or 'tempo'; note data is (pitch, velocity),
    tempo data is microseconds per quarter note.
    """
    tick = 0
    status = None
    while reader.pos < len(reader.data):
        tick += reader.varlen()
        byte = reader.u8()
        if byte & 0x80:
            status = byte
        elif status is None:
            raise MidiParseError("running status without prior status",
                                 reader.pos - 1)
        else:
            reader.pos -= 1
        if status == 0xFF:
            meta = reader.u8()
            length = reader.varlen()
            payload = reader.take(length)
            if meta == 0x51:
                if length != 3:
                    raise MidiParseError("bad tempo meta length", reader.pos)
                yield tick, "tempo", int.from_bytes(payload, "big")
            elif meta == 0x2F:
                return
            status = None  # meta events cancel running status
        elif status in (0xF0, 0xF7):
            reader.take(reader.varlen())
            status = None
        elif status >= 0xF0:
            raise MidiParseError(f"unsupported system message {status:#x}",
                                 reader.pos - 1)
        else:
            kind = status & 0xF0
            pitch = reader.u8()
            if kind in (0xC0, 0xD0):      # program change / channel pressure
                continue
            value = reader.u8()
            if kind == 0x90 and value > 0:
                yield tick, "on", (pitch, value)
            elif kind == 0x80 or kind == 0x90:
                yield tick, "off", (pitch, value)


class _TempoMap:
    """Piecewise-constant tempo; converts absolute ticks to seconds."""

    def __init__(self, changes, ppq):
        self.ppq = ppq
        self.segments = []            # (tick, seconds_at_tick, us_per_quarter)
        tempo = DEFAULT_TEMPO_US
        tick = 0
        seconds = 0.0
        for change_tick, us in sorted(changes):
            seconds += (change_tick - tick) * tempo / (ppq * 1e6)
            tick = change_tick
            tempo = us
            self.segments.append((tick, seconds, tempo))
        if not self.segments or self.segments[0][0] > 0:
            self.segments.insert(0, (0, 0.0, DEFAULT_TEMPO_US))

    def seconds(self, tick: int) -> float:
        seg = self.segments[0]
        for candidate in self.segments:
            if candidate[0] > tick:
                break
            seg = candidate
        start_tick, start_s, tempo = seg
        return start_s + (tick - start_tick) * tempo / (self.ppq * 1e6)


def parse_midi_report(data: bytes) -> tuple[Score, MidiReport]:
    """Parse a format 0/1 MIDI file, also returning oddity counters."""
    reader = _Reader(data)
    if reader.take(4) != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = struct.unpack(">I", reader.take(4))[0]
    if header_len < 6:
        raise MidiParseError("MThd too short", reader.pos)
    fmt, ntrks, division = struct.unpack(">HHH", reader.take(6))
    reader.take(header_len - 6)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported MIDI format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division unsupported", 12)
    if division == 0:
        raise MidiParseError("zero ticks per quarter note", 12)

    tempo_changes = []
    notes = []                        # (tick, order, kind, pitch, velocity)
    order = 0
    for _ in range(ntrks):
        if reader.pos >= len(data):
            raise MidiParseError("missing track chunk", reader.pos)
        chunk = reader.take(4)
        length = struct.unpack(">I", reader.take(4))[0]
        body = reader.take(length)
        if chunk != b"MTrk":
            continue                  # alien chunk: skip per SMF spec
        for tick, kind, payload in _parse_track(_Reader(body, 0)):
            if kind == "tempo":
                tempo_changes.append((tick, payload))
            else:
                pitch, velocity = payload
                notes.append((tick, order, kind, pitch, velocity))
                order += 1

    tempo = _TempoMap(tempo_changes, division)
    report = MidiReport()
    events = []
    open_notes: dict[int, list] = {}
    end_tick = 0
    for tick, _order, kind, pitch, velocity in sorted(notes):
        end_tick = max(end_tick, tick)
        if kind == "on":
            open_notes.setdefault(pitch, []).append((tick, velocity))
        else:
            stack = open_notes.get(pitch)
            if stack:
                on_tick, on_vel = stack.pop(0)
                events.append((pitch, on_vel, on_tick, tick))

    for pitch, stack in open_notes.items():
        for on_tick, on_vel in stack:
            report.unmatched_note_ons += 1
            events.append((pitch, on_vel, on_tick, end_tick))

    note_events = []
    for pitch, velocity, on_tick, off_tick in events:
        if not PITCH_MIN <= pitch <= PITCH_MAX:
            report.dropped_out_of_range += 1
            report.dropped_pitches.append(pitch)
            continue
        onset = tempo.seconds(on_tick)
        offset = tempo.seconds(off_tick)
        if offset <= onset:
            offset = None
        note_events.append(NoteEvent(
            onset_s=onset,
            key=pitch - 20,
            velocity=velocity / VELOCITY_SCALE,
            offset_s=offset,
        ))

    score = Score.from_events(note_events, duration_s=None)
    return score, report


def parse_midi(data: bytes) -> Score:
    """Parse MIDI bytes into a Score (see parse_midi_report for counters)."""
    score, report = parse_midi_report(data)
    if report.dropped_out_of_range:
        log.warning("dropped %d notes outside piano range (pitches %s)",
                    report.dropped_out_of_range,
                    sorted(set(report.dropped_pitches)))
    if report.unmatched_note_ons:
        log.warning("closed %d unmatched note-ons at end of file",
                    report.unmatched_note_ons)
    return score


def default_velocity_denorm(velocity: float) -> int:
    return min(127, max(1, round(velocity * VELOCITY_SCALE)))


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(score: Score, velocity_denorm=default_velocity_denorm) -> bytes:
    """Serialize a Score as a single-track (format 0) MIDI file.

    Onset-only events get a 0.25 s synthetic duration. Round trip holds
    to within one tick (= 1/1920 s) and one velocity quantization step.
    """
    messages = []                     # (tick, priority, status, data1, data2)
    for ev in score:
        on_tick = round(ev.onset_s * WRITE_TICKS_PER_S)
        offset = ev.offset_s if ev.offset_s is not None \
            else ev.onset_s + DEFAULT_NOTE_LEN_S
        off_tick = max(on_tick + 1, round(offset * WRITE_TICKS_PER_S))
        velocity = velocity_denorm(ev.velocity)
        messages.append((on_tick, 1, 0x90, ev.pitch, velocity))
        messages.append((off_tick, 0, 0x80, ev.pitch, 0))

    body = bytearray()
    body += _varlen(0) + bytes([0xFF, 0x51, 0x03])
    body += WRITE_TEMPO_US.to_bytes(3, "big")
    tick = 0
    # Offsets sort before onsets at equal ticks so re-parsing never sees
    # overlapping same-pitch notes from zero-gap repetitions.
    for msg_tick, _prio, status, data1, data2 in sorted(messages):
        body += _varlen(msg_tick - tick) + bytes([status, data1, data2])
        tick = msg_tick
    body += _varlen(0) + bytes([0xFF, 0x2F, 0x00])

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, WRITE_PPQ)
    track = b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    return header + track
