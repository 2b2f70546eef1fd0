"""WAV ingestion: RIFF parsing, downmix and polyphase resampling to 16 kHz."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

TARGET_RATE_HZ = 16000

#: windowed-sinc design: taps per polyphase branch, Kaiser shape, and the
#: anti-alias cutoff as a fraction of the lower of the two rates.
RESAMPLE_TAPS_PER_PHASE = 32
RESAMPLE_KAISER_BETA = 8.6
RESAMPLE_CUTOFF_FRACTION = 0.45

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

_CODEC_NAMES = {
    0x0002: "ADPCM",
    0x0006: "A-law",
    0x0007: "mu-law",
    0x0011: "IMA ADPCM",
    0x0055: "MP3",
}


class UnsupportedFormatError(ValueError):
    """WAV data uses a compression codec we do not decode."""


class WavParseError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples at 16 kHz, nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = TARGET_RATE_HZ

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("waveform must be 1-D")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


def read_wav(data: bytes) -> tuple[np.ndarray, int]:
    """Decode RIFF/WAVE bytes to (channels x samples float array, rate).

    Supports PCM16 and float32, including the WAVE_FORMAT_EXTENSIBLE
    wrapper. PCM16 is scaled by 1/32768.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavParseError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise WavParseError("missing fmt/data chunk")
    if len(fmt) < 16:
        raise WavParseError("truncated fmt chunk")
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavParseError("truncated WAVE_FORMAT_EXTENSIBLE chunk")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if tag == WAVE_FORMAT_PCM:
        if bits != 16:
            raise UnsupportedFormatError(f"PCM with {bits} bits (only 16)")
        raw = np.frombuffer(payload, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedFormatError(f"float with {bits} bits (only 32)")
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        name = _CODEC_NAMES.get(tag, "unknown codec")
        raise UnsupportedFormatError(
            f"unsupported WAV compression tag {tag:#06x} ({name})")
    if channels < 1:
        raise WavParseError("zero channels")
    samples = samples[:len(samples) - len(samples) % channels]
    return samples.reshape(-1, channels).T, int(rate)


def write_wav(samples: np.ndarray, rate: int, float32: bool = False) -> bytes:
    """Encode mono samples as PCM16 (default) or float32 WAV bytes."""
    samples = np.asarray(samples, dtype=np.float64)
    if float32:
        payload = samples.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        scaled = np.clip(np.round(samples * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, rate, rate * block, block, bits)
    chunks = (b"WAVE"
              + b"fmt " + struct.pack("<I", len(fmt)) + fmt
              + b"data" + struct.pack("<I", len(payload)) + payload)
    return b"RIFF" + struct.pack("<I", len(chunks)) + chunks


def design_resample_filter(up: int, down: int, rate_in: int) -> np.ndarray:
    """Windowed-sinc low-pass for up/down polyphase resampling.

    32 taps per phase plus a center tap; Kaiser window; cutoff at 0.45
    of the lower rate. Returned with unit DC gain; the polyphase driver
    multiplies by ``up`` to compensate the upsampler's gain loss.
    """
    taps = RESAMPLE_TAPS_PER_PHASE * up + 1
    rate_out = rate_in * up // down
    cutoff_hz = RESAMPLE_CUTOFF_FRACTION * min(rate_in, rate_out)
    rate_up = rate_in * up
    n = np.arange(taps) - (taps - 1) / 2
    h = (2 * cutoff_hz / rate_up) * np.sinc(2 * cutoff_hz / rate_up * n)
    h *= np.kaiser(taps, RESAMPLE_KAISER_BETA)
    return h / np.sum(h)


def resample(samples: np.ndarray, rate_in: int,
             rate_out: int = TARGET_RATE_HZ) -> np.ndarray:
    """Rate-convert mono audio with the filter above; identity if equal."""
    if rate_in == rate_out:
        return np.asarray(samples, dtype=np.float64)
    g = math.gcd(rate_in, rate_out)
    up, down = rate_out // g, rate_in // g
    h = design_resample_filter(up, down, rate_in)
    return resample_poly(samples, up, down, window=h)


def ingest_audio(data: bytes) -> Waveform:
    """WAV bytes of any supported rate/channel layout -> 16 kHz mono."""
    channels, rate = read_wav(data)
    mono = channels.mean(axis=0) if channels.shape[0] > 1 else channels[0]
    return Waveform(resample(mono, rate), TARGET_RATE_HZ)
