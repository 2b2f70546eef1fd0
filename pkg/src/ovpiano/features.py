"""Log-mel spectrogram frontend: 229 bins, 50-8000 Hz, 24 ms frames.

STFT with a periodic Hann window of 2048 samples and hop 384 at 16 kHz;
power spectrum projected onto HTK-mel triangular filters (peak 1, no
area normalization) and natural-log compressed with a 1e-10 floor. The
first temporal difference rides along as a handcrafted intensity cue.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .audio import TARGET_RATE_HZ, Waveform

N_FFT = 2048
HOP = 384
N_MELS = 229
FMIN_HZ = 50.0
FMAX_HZ = 8000.0
LOG_FLOOR = 1e-10
FRAME_PERIOD_S = HOP / TARGET_RATE_HZ


class InvalidConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LogMelSpectrogram:
    """Log-mel values and their first temporal difference (bins x frames)."""

    values: np.ndarray
    derivative: np.ndarray
    frame_period_s: float = FRAME_PERIOD_S

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    def stacked(self) -> np.ndarray:
        """2 x bins x frames network input (values, derivative)."""
        return np.stack([self.values, self.derivative])


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(n_fft: int = N_FFT, n_mels: int = N_MELS,
                         fmin_hz: float = FMIN_HZ, fmax_hz: float = FMAX_HZ,
                         rate_hz: int = TARGET_RATE_HZ) -> np.ndarray:
    """Triangular HTK-mel filters as an (n_mels, n_fft//2 + 1) matrix."""
    if n_mels < 2:
        raise InvalidConfigError(f"need at least 2 mel bins, got {n_mels}")
    if not 0 <= fmin_hz < fmax_hz <= rate_hz / 2:
        raise InvalidConfigError(
            f"bad band edges {fmin_hz}..{fmax_hz} at rate {rate_hz}")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz),
                                     n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (rate_hz / n_fft)
    left = edges_hz[:-2, None]
    center = edges_hz[1:-1, None]
    right = edges_hz[2:, None]
    rising = (bin_hz - left) / (center - left)
    falling = (right - bin_hz) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def periodic_hann(length: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def frame_count(n_samples: int, hop: int = HOP) -> int:
    """T' = floor(T / hop) + 1 under centered framing."""
    return n_samples // hop + 1


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    if len(x) == 1:
        return np.full(2 * pad + 1, x[0])
    return np.pad(x, pad, mode="reflect")


def stft_power(samples: np.ndarray, n_fft: int = N_FFT,
               hop: int = HOP) -> np.ndarray:
    """Centered power spectrogram, (n_fft//2 + 1) x T'.

    Frame t' is centered on sample t' * hop via reflect padding of
    n_fft//2 on both ends, so frame times align with t' * hop / rate.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    padded = _reflect_pad(samples, n_fft // 2)
    frames = frame_count(len(samples), hop)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(frames)[:, None]
    windowed = padded[idx] * periodic_hann(n_fft)[None, :]
    spectrum = np.fft.rfft(windowed, axis=1)
    return (spectrum.real ** 2 + spectrum.imag ** 2).T


def logmel(waveform: Waveform, melmat: np.ndarray | None = None,
           n_fft: int = N_FFT, hop: int = HOP) -> LogMelSpectrogram:
    """Waveform -> log-mel spectrogram plus temporal derivative."""
    if melmat is None:
        melmat = _default_melmat()
    power = stft_power(waveform.samples, n_fft, hop)
    values = np.log(np.maximum(melmat @ power, LOG_FLOOR))
    derivative = np.zeros_like(values)
    derivative[:, 1:] = values[:, 1:] - values[:, :-1]
    return LogMelSpectrogram(values, derivative, hop / waveform.sample_rate_hz)


_MELMAT_CACHE = None


def _default_melmat() -> np.ndarray:
    global _MELMAT_CACHE
    if _MELMAT_CACHE is None:
        _MELMAT_CACHE = build_mel_filterbank()
    return _MELMAT_CACHE


# --- OVF1 matrix dumps -------------------------------------------------
#
# 16-byte header: magic "OVF1", u32 rows, u32 cols, u32 reserved (zero),
# followed by the row-major float32 little-endian payload.

OVF1_MAGIC = b"OVF1"


def write_ovf1(matrix: np.ndarray) -> bytes:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("OVF1 stores 2-D matrices")
    rows, cols = matrix.shape
    header = OVF1_MAGIC + struct.pack("<III", rows, cols, 0)
    return header + np.ascontiguousarray(matrix, dtype="<f4").tobytes()


def read_ovf1(data: bytes) -> np.ndarray:
    if len(data) < 16 or data[:4] != OVF1_MAGIC:
        raise ValueError("not an OVF1 matrix dump")
    rows, cols, _ = struct.unpack_from("<III", data, 4)
    expected = 16 + 4 * rows * cols
    if len(data) != expected:
        raise ValueError(f"OVF1 payload length {len(data)} != {expected}")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(rows, cols)
