"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 corrupt or
mismatched data (weights, WAV, MIDI). Defaults reproduce the full-size
configuration, so a bare ``transcribe`` run uses the published decoder
constants. Heavy imports happen after argument parsing so ``--threads``
can cap the BLAS pools via the environment.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovpiano",
        description="Real-time piano transcription: onsets and velocities.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS thread pools (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_decoder_flags(p):
        p.add_argument("--sigma", type=float, default=1.0,
                       help="smoothing stddev in frames")
        p.add_argument("--rho", type=float, default=0.74,
                       help="peak threshold")
        p.add_argument("--mu", type=float, default=-0.01,
                       help="onset time shift in seconds")

    p = sub.add_parser("transcribe", help="WAV + weights -> MIDI")
    p.add_argument("wav", type=Path)
    p.add_argument("weights", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--stages", type=int, default=None,
                   help="onset stages to evaluate (default: all)")
    add_decoder_flags(p)
    p.add_argument("--dump-rolls", type=Path, default=None, metavar="PREFIX",
                   help="write PREFIX.onset.ovf1 / PREFIX.velocity.ovf1")

    p = sub.add_parser("evaluate", help="score est MIDI corpus against ref")
    p.add_argument("ref_dir", type=Path)
    p.add_argument("est_dir", type=Path)
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("stream", help="chunked transcription, JSON-lines out")
    p.add_argument("weights", type=Path)
    p.add_argument("--wav", type=Path, default=None,
                   help="input file (default: raw float32 on stdin)")
    p.add_argument("--chunk", type=int, default=1024,
                   help="chunk size in samples")
    p.add_argument("--hop", type=int, default=8,
                   help="recompute stride in frames")
    p.add_argument("--stages", type=int, default=None)
    p.add_argument("--context", type=float, default=4.0,
                   help="buffered context seconds")
    p.add_argument("--exact", action="store_true",
                   help="enough lookahead to match the offline pipeline")
    p.add_argument("--out-midi", type=Path, default=None)
    add_decoder_flags(p)

    p = sub.add_parser("bench", help="real-time factor per stage count")
    p.add_argument("weights", type=Path, nargs="?", default=None,
                   help="OVW1 file (default: fresh He-initialized weights)")
    p.add_argument("--wav", type=Path, default=None)
    p.add_argument("--seconds", type=float, default=120.0,
                   help="synthetic audio length when no WAV given")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--coords", type=int, default=24)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("lr-schedule", help="dump the LR schedule as CSV")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--csv", type=Path, default=None)

    p = sub.add_parser("features", help="WAV -> OVF1 log-mel dump")
    p.add_argument("wav", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--derivative", action="store_true",
                   help="dump the temporal derivative instead")

    p = sub.add_parser("inspect-weights", help="list tensors and counts")
    p.add_argument("weights", type=Path)
    return parser


def _load_weights(path: Path):
    from .model.weights import load_weights
    return load_weights(path.read_bytes())


def _decoder_params(args):
    from .decode import DecoderParams
    return DecoderParams(sigma_frames=args.sigma, threshold=args.rho,
                         shift_s=args.mu)


def cmd_transcribe(args) -> int:
    from .audio import ingest_audio
    from .features import write_ovf1
    from .midi import write_midi
    from .pipeline import transcribe_waveform

    weights = _load_weights(args.weights)
    waveform = ingest_audio(args.wav.read_bytes())
    start = time.perf_counter()
    result = transcribe_waveform(waveform, weights, _decoder_params(args),
                                 active_stages=args.stages)
    elapsed = time.perf_counter() - start
    args.out.write_bytes(write_midi(result.score))
    if args.dump_rolls is not None:
        base = str(args.dump_rolls)
        Path(base + ".onset.ovf1").write_bytes(
            write_ovf1(result.onset_roll.values))
        Path(base + ".velocity.ovf1").write_bytes(
            write_ovf1(result.velocity_roll.values))
    print(f"{len(result.score)} events in {elapsed:.2f}s "
          f"({waveform.duration_s:.1f}s audio, "
          f"rtf {elapsed / max(waveform.duration_s, 1e-9):.3f})")
    return EXIT_OK


def _paired_midi_files(ref_dir: Path, est_dir: Path):
    names = sorted(p.name for p in ref_dir.iterdir()
                   if p.suffix.lower() in (".mid", ".midi"))
    pairs = [(ref_dir / n, est_dir / n) for n in names
             if (est_dir / n).exists()]
    return pairs


def cmd_evaluate(args) -> int:
    from .metrics import evaluate_files

    if not args.ref_dir.is_dir() or not args.est_dir.is_dir():
        print("evaluate: ref/est must be directories", file=sys.stderr)
        return EXIT_IO
    pairs = _paired_midi_files(args.ref_dir, args.est_dir)
    if not pairs:
        print("evaluate: no matching MIDI file names between directories",
              file=sys.stderr)
        return EXIT_IO
    report = evaluate_files([r for r, _ in pairs], [e for _, e in pairs])
    csv_text = report.to_csv()
    if args.csv is not None:
        args.csv.write_text(csv_text)
    else:
        print(csv_text, end="")
    mean = report.mean_scores()
    if mean:
        print("mean: onset P/R/F1 = "
              f"{mean['onset_precision'] * 100:.2f}/"
              f"{mean['onset_recall'] * 100:.2f}/"
              f"{mean['onset_f1'] * 100:.2f}  "
              "onset+velocity P/R/F1 = "
              f"{mean['onvel_precision'] * 100:.2f}/"
              f"{mean['onvel_recall'] * 100:.2f}/"
              f"{mean['onvel_f1'] * 100:.2f}")
    return EXIT_OK


def cmd_stream(args) -> int:
    import json

    import numpy as np

    from .audio import TARGET_RATE_HZ, ingest_audio
    from .midi import write_midi
    from .score import Score
    from .stream import StreamConfig, StreamingTranscriber

    weights = _load_weights(args.weights)
    params = _decoder_params(args)
    if args.exact:
        config = StreamConfig.exact(context_s=max(args.context, 120.0),
                                    active_stages=args.stages)
    else:
        config = StreamConfig(context_s=args.context,
                              active_stages=args.stages,
                              chunk_hop_frames=args.hop)
    stream = StreamingTranscriber(weights, config, params)

    def chunks():
        if args.wav is not None:
            samples = ingest_audio(args.wav.read_bytes()).samples
            for i in range(0, len(samples), args.chunk):
                yield samples[i:i + args.chunk]
        else:
            while True:
                raw = sys.stdin.buffer.read(4 * args.chunk)
                if not raw:
                    return
                yield np.frombuffer(raw[:len(raw) - len(raw) % 4], "<f4")

    collected = []
    for chunk in chunks():
        for ev in stream.push(chunk):
            collected.append(ev)
            print(json.dumps({"key": ev.key, "velocity": round(ev.velocity, 6),
                              "onset_s": round(ev.onset_s, 6)}), flush=True)
    for ev in stream.flush():
        collected.append(ev)
        print(json.dumps({"key": ev.key, "velocity": round(ev.velocity, 6),
                          "onset_s": round(ev.onset_s, 6)}), flush=True)
    if args.out_midi is not None:
        args.out_midi.write_bytes(write_midi(Score.from_events(collected)))
    print(f"# {len(collected)} events (rate {TARGET_RATE_HZ} Hz)",
          file=sys.stderr)
    return EXIT_OK


def _synthetic_audio(seconds: float, seed: int):
    import numpy as np

    from .audio import TARGET_RATE_HZ, Waveform

    rng = np.random.default_rng(seed)
    n = int(seconds * TARGET_RATE_HZ)
    t = np.arange(n) / TARGET_RATE_HZ
    samples = 0.02 * rng.standard_normal(n)
    for _ in range(max(1, int(seconds))):
        f = rng.uniform(60, 2000)
        start = rng.integers(0, max(1, n - TARGET_RATE_HZ))
        length = int(TARGET_RATE_HZ * rng.uniform(0.1, 0.5))
        seg = slice(start, min(n, start + length))
        samples[seg] += 0.2 * np.sin(2 * np.pi * f * t[seg])
    return Waveform(np.clip(samples, -1, 1))


def cmd_bench(args) -> int:
    from .model.config import ModelConfig
    from .pipeline import benchmark_rtf
    from .training import he_init

    if args.weights is not None:
        weights = _load_weights(args.weights)
    else:
        weights = he_init(ModelConfig(), seed=args.seed)
    if args.wav is not None:
        from .audio import ingest_audio
        waveform = ingest_audio(args.wav.read_bytes())
    else:
        waveform = _synthetic_audio(args.seconds, args.seed)
    print("stages,audio_s,process_s,rtf")
    for row in benchmark_rtf(weights, waveform):
        print(f"{row.active_stages},{row.audio_s:.3f},"
              f"{row.process_s:.3f},{row.rtf:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .model.config import MICRO_CONFIG
    from .training import (LossWeights, batch_loss, finite_diff_gradcheck,
                           he_init, make_overfit_batch)

    weights = he_init(MICRO_CONFIG, seed=args.seed)
    batch = make_overfit_batch(MICRO_CONFIG, seed=args.seed)
    report = finite_diff_gradcheck(
        lambda w: batch_loss(w, batch, LossWeights()), weights,
        n_coords=args.coords, h=args.step, seed=args.seed)
    lines = ["coord,rel_error"]
    lines += [f"{i},{r.rel_error:.9g}" for i, r in enumerate(report.records)]
    text = "\n".join(lines) + "\n"
    if args.csv is not None:
        args.csv.write_text(text)
    else:
        print(text, end="")
    print(f"max_rel_error,{report.max_rel_error:.9g}")
    return EXIT_OK


def cmd_lr_schedule(args) -> int:
    from .training import ScheduleParams, lr_schedule

    params = ScheduleParams()
    lines = ["step,value"]
    lines += [f"{s},{lr_schedule(s, params):.9g}" for s in range(args.steps)]
    text = "\n".join(lines) + "\n"
    if args.csv is not None:
        args.csv.write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_features(args) -> int:
    from .audio import ingest_audio
    from .features import logmel, write_ovf1

    spec = logmel(ingest_audio(args.wav.read_bytes()))
    matrix = spec.derivative if args.derivative else spec.values
    args.out.write_bytes(write_ovf1(matrix))
    print(f"{spec.bins}x{spec.frames} frames -> {args.out}")
    return EXIT_OK


def cmd_inspect_weights(args) -> int:
    import zlib

    from .model.weights import count_parameters

    data = args.weights.read_bytes()
    weights = _load_weights(args.weights)
    print(f"file: {args.weights} ({len(data)} bytes, "
          f"crc32 {zlib.crc32(data[:-4]):#010x})")
    for name in weights.layout:
        if name in weights.arrays:
            arr = weights.arrays[name]
            print(f"  {name}  {'x'.join(map(str, arr.shape))}  f32")
        else:
            print(f"  {name}  (config, {len(weights.config_raw)} bytes)")
    total = count_parameters(weights.config)
    print(f"tensors: {len(weights.layout)}  "
          f"parameters: {total} ({total / 1e6:.2f}M)")
    return EXIT_OK


_COMMANDS = {
    "transcribe": cmd_transcribe,
    "evaluate": cmd_evaluate,
    "stream": cmd_stream,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
    "lr-schedule": cmd_lr_schedule,
    "features": cmd_features,
    "inspect-weights": cmd_inspect_weights,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .midi import MidiParseError
    from .model.config import ConfigError
    from .model.ops import CorruptWeightsError
    from .model.weights import CorruptFileError, WeightSchemaError
    from .audio import UnsupportedFormatError, WavParseError

    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorruptFileError, WeightSchemaError, CorruptWeightsError,
            MidiParseError, WavParseError, UnsupportedFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
