"""Offline transcription: waveform -> features -> network -> events."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .audio import Waveform
from .decode import DecoderParams, decode
from .features import LogMelSpectrogram, logmel
from .model.network import NetworkOutput, ov_forward
from .model.weights import ModelWeights
from .rolls import PianoRoll
from .score import Score


@dataclass
class TranscriptionResult:
    score: Score
    onset_roll: PianoRoll
    velocity_roll: PianoRoll
    network: NetworkOutput
    features: LogMelSpectrogram


def infer_rolls(features: LogMelSpectrogram, weights: ModelWeights,
                active_stages: int | None = None) -> NetworkOutput:
    """Network forward on stacked (values, derivative) features."""
    x = features.stacked().astype(np.float32)
    return ov_forward(x, weights, active_stages, features.frame_period_s)


def transcribe_waveform(waveform: Waveform, weights: ModelWeights,
                        params: DecoderParams = DecoderParams(),
                        active_stages: int | None = None,
                        ) -> TranscriptionResult:
    """Full offline pipeline; decodes the last active onset stage."""
    features = logmel(waveform)
    network = infer_rolls(features, weights, active_stages)
    onset_roll = network.onset_roll(stage=-1)
    velocity_roll = network.velocity_roll()
    score = decode(onset_roll, velocity_roll, params)
    return TranscriptionResult(score, onset_roll, velocity_roll, network,
                               features)


@dataclass
class BenchmarkRow:
    active_stages: int
    audio_s: float
    process_s: float

    @property
    def rtf(self) -> float:
        return self.process_s / self.audio_s


def benchmark_rtf(weights: ModelWeights, waveform: Waveform,
                  stage_counts=None, params: DecoderParams = DecoderParams(),
                  repeats: int = 1) -> list[BenchmarkRow]:
    """Wall-clock real-time factor per active stage count.

    Timings include feature extraction, network forward and decoding;
    with repeats > 1 the minimum wall time per stage count is reported,
    with the sweeps interleaved so every stage count samples the same
    noise environment (scheduler noise only ever inflates a timing).
    """
    if stage_counts is None:
        stage_counts = range(1, weights.config.onset_stage_count + 1)
    stage_counts = list(stage_counts)
    best = {n: math.inf for n in stage_counts}
    for _ in range(repeats):
        for n in stage_counts:
            start = time.perf_counter()
            transcribe_waveform(waveform, weights, params, active_stages=n)
            best[n] = min(best[n], time.perf_counter() - start)
    return [BenchmarkRow(n, waveform.duration_s, best[n])
            for n in stage_counts]
