import numpy as np
import pytest

from ovpiano.audio import TARGET_RATE_HZ, Waveform
from ovpiano.model.config import ModelConfig
from ovpiano.score import NoteEvent, Score
from ovpiano.training import he_init

_ACCEPTANCE_RESULTS = []


def record_acceptance(name: str, passed: bool):
    _ACCEPTANCE_RESULTS.append((name, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")


def random_score(rng, n_events: int, duration_s: float = 10.0,
                 with_offsets: bool = True) -> Score:
    """Random events; same-key notes never overlap (SMF cannot encode
    overlapping same-pitch notes unambiguously)."""
    slots = set()
    while len(slots) < n_events:
        slots.add((int(rng.integers(1, 89)),
                   round(float(rng.uniform(0, duration_s - 1.0)), 3)))
    per_key = {}
    for key, onset in sorted(slots):
        per_key.setdefault(key, []).append(onset)
    events = []
    for key, onsets in per_key.items():
        for i, onset in enumerate(onsets):
            if not with_offsets:
                offset = None
            else:
                offset = onset + float(rng.uniform(0.05, 0.9))
                if i + 1 < len(onsets):
                    offset = min(offset, onsets[i + 1] - 1e-3)
            events.append(NoteEvent(
                onset_s=onset, key=key,
                velocity=float(rng.integers(1, 128)) / 127.0,
                offset_s=offset,
            ))
    return Score.from_events(events, duration_s=duration_s + 1.0)


def synth_waveform(seconds: float, seed: int) -> Waveform:
    """Noise plus a handful of sine bursts; loosely piano-ish energy."""
    rng = np.random.default_rng(seed)
    n = int(seconds * TARGET_RATE_HZ)
    t = np.arange(n) / TARGET_RATE_HZ
    x = 0.05 * rng.standard_normal(n)
    for _ in range(max(1, int(3 * seconds))):
        f0 = rng.uniform(100, 2000)
        start = rng.uniform(0, max(seconds - 0.5, 0.1))
        i0 = int(start * TARGET_RATE_HZ)
        seg = slice(i0, min(n, i0 + 6000))
        x[seg] += 0.4 * np.sin(2 * np.pi * f0 * t[seg])
    return Waveform(np.clip(x, -1.0, 1.0))


@pytest.fixture(scope="session")
def paper_config():
    return ModelConfig()


@pytest.fixture(scope="session")
def paper_weights(paper_config):
    return he_init(paper_config, seed=1)
