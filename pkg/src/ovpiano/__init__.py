"""Real-time polyphonic piano transcription on CPU.

Waveform in, note events out: a log-mel DSP frontend, a small
convolutional network predicting per-key onset probabilities and
velocities on a 24 ms grid, and a smoothing/peak-picking decoder.
Includes MIDI I/O, the training-time losses and schedule as testable
operations, the note-matching evaluation protocol, and a chunked
streaming mode.
"""

__version__ = "0.1.0"

from .audio import Waveform, ingest_audio
from .decode import DecoderParams, decode, gaussian_smooth, nms_peaks
from .features import LogMelSpectrogram, build_mel_filterbank, logmel
from .midi import parse_midi, parse_midi_report, write_midi
from .model import (ModelConfig, ModelWeights, count_parameters, load_weights,
                    ov_forward, receptive_field, save_weights)
from .rolls import PianoRoll, QuantizedRolls, quantize
from .score import NoteEvent, Score

__all__ = [
    "__version__", "Waveform", "ingest_audio", "DecoderParams", "decode",
    "gaussian_smooth", "nms_peaks", "LogMelSpectrogram",
    "build_mel_filterbank", "logmel", "parse_midi", "parse_midi_report",
    "write_midi", "ModelConfig", "ModelWeights", "count_parameters",
    "load_weights", "ov_forward", "receptive_field", "save_weights",
    "PianoRoll", "QuantizedRolls", "quantize", "NoteEvent", "Score",
]
