"""Note-matching evaluation: onset and onset+velocity precision/recall/F1.

An estimated note can match a reference note of the same key whose
onset lies within the tolerance (50 ms, inclusive); scoring uses a
maximum-cardinality bipartite matching over those candidates, per the
convention of the standard transcription-evaluation library. The
velocity protocol first fits one global scale to the estimated
velocities and then requires the scaled velocity to lie within 0.1 of
the (max-normalized) reference.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .midi import parse_midi
from .score import Score

ONSET_TOL_S = 0.05
VELOCITY_TOL = 0.1


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]
    n_ref: int
    n_est: int

    @property
    def n_match(self) -> int:
        return len(self.pairs)

    @property
    def precision(self) -> float:
        return self.n_match / self.n_est if self.n_est else 0.0

    @property
    def recall(self) -> float:
        return self.n_match / self.n_ref if self.n_ref else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def _max_bipartite_matching(adjacency: list[list[int]]) -> list[int]:
    """Maximum matching via BFS augmenting paths; returns left->right."""
    match_left = [-1] * len(adjacency)
    match_right: dict[int, int] = {}
    for start in range(len(adjacency)):
        parents = {start: None}
        frontier = [start]
        endpoint = None
        while frontier and endpoint is None:
            nxt = []
            for u in frontier:
                for v in adjacency[u]:
                    w = match_right.get(v, -1)
                    if w == -1:
                        endpoint = (u, v)
                        break
                    if w not in parents:
                        parents[w] = u
                        nxt.append(w)
                if endpoint:
                    break
            frontier = nxt
        if endpoint:
            u, v = endpoint
            while u is not None:
                previous = match_left[u]
                match_left[u] = v
                match_right[v] = u
                u, v = parents[u], previous
    return match_left


def _candidate_pairs(ref: Score, est: Score, tol_s: float):
    """(ref index, est index) pairs with same key, onsets within tol."""
    by_key: dict[int, list[int]] = {}
    for j, e in enumerate(est.events):
        by_key.setdefault(e.key, []).append(j)
    pairs = []
    for i, r in enumerate(ref.events):
        for j in by_key.get(r.key, ()):
            if abs(r.onset_s - est.events[j].onset_s) <= tol_s:
                pairs.append((i, j))
    return pairs


def _match(ref: Score, est: Score, pairs) -> MatchResult:
    adjacency: list[list[int]] = [[] for _ in ref.events]
    for i, j in pairs:
        adjacency[i].append(j)
    match_left = _max_bipartite_matching(adjacency)
    matched = tuple((i, j) for i, j in enumerate(match_left) if j != -1)
    return MatchResult(matched, len(ref.events), len(est.events))


def match_onsets(ref: Score, est: Score,
                 tol_s: float = ONSET_TOL_S) -> MatchResult:
    """Same-key onset matching within an inclusive time tolerance."""
    return _match(ref, est, _candidate_pairs(ref, est, tol_s))


def velocity_scale(ref_velocities, est_velocities) -> float:
    """Least-squares scale s minimizing sum (s*est - ref)^2 (no offset)."""
    denom = sum(v * v for v in est_velocities)
    if denom == 0:
        return 0.0
    return sum(r * e for r, e in zip(ref_velocities, est_velocities)) / denom


def match_onset_velocity(ref: Score, est: Score, tol_s: float = ONSET_TOL_S,
                         vel_tol: float = VELOCITY_TOL,
                         rescale: bool = True) -> MatchResult:
    """Onset matching with the additional rescaled-velocity constraint.

    Reference velocities are normalized by their maximum; one global
    scale is fit over all onset-candidate pairs; a pair survives iff
    the scaled estimate is within ``vel_tol`` of the reference.
    """
    pairs = _candidate_pairs(ref, est, tol_s)
    ref_max = max((e.velocity for e in ref.events), default=0.0)
    norm = (1.0 / ref_max) if ref_max > 0 else 1.0

    scale = 1.0
    if rescale:
        scale = velocity_scale(
            [ref.events[i].velocity * norm for i, _ in pairs],
            [est.events[j].velocity for _, j in pairs])
    valid = [(i, j) for i, j in pairs
             if abs(scale * est.events[j].velocity
                    - ref.events[i].velocity * norm) <= vel_tol]
    return _match(ref, est, valid)


@dataclass
class FileEvaluation:
    name: str
    onset: MatchResult | None = None
    onset_velocity: MatchResult | None = None
    error: str | None = None


@dataclass
class CorpusReport:
    files: list[FileEvaluation] = field(default_factory=list)

    def _scored(self):
        return [f for f in self.files if f.error is None]

    def mean_scores(self) -> dict[str, float]:
        """Unweighted mean of per-file metrics (library convention)."""
        scored = self._scored()
        if not scored:
            return {}
        out = {}
        for prefix, attr in (("onset", "onset"), ("onvel", "onset_velocity")):
            for metric in ("precision", "recall", "f1"):
                vals = [getattr(getattr(f, attr), metric) for f in scored]
                out[f"{prefix}_{metric}"] = sum(vals) / len(vals)
        return out

    def pooled_scores(self) -> dict[str, float]:
        """Corpus-pooled counts, reported alongside for transparency."""
        scored = self._scored()
        out = {}
        for prefix, attr in (("onset", "onset"), ("onvel", "onset_velocity")):
            n_match = sum(getattr(f, attr).n_match for f in scored)
            n_ref = sum(getattr(f, attr).n_ref for f in scored)
            n_est = sum(getattr(f, attr).n_est for f in scored)
            p = n_match / n_est if n_est else 0.0
            r = n_match / n_ref if n_ref else 0.0
            out[f"{prefix}_precision"] = p
            out[f"{prefix}_recall"] = r
            out[f"{prefix}_f1"] = 2 * p * r / (p + r) if p + r else 0.0
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["file", "n_ref", "n_est", "onset_P", "onset_R",
                         "onset_F1", "onvel_P", "onvel_R", "onvel_F1"])
        for f in self.files:
            if f.error is not None:
                writer.writerow([f.name, "", "", "", "", "", "", "",
                                 f"error: {f.error}"])
                continue
            writer.writerow([
                f.name, f.onset.n_ref, f.onset.n_est,
                f"{f.onset.precision:.6f}", f"{f.onset.recall:.6f}",
                f"{f.onset.f1:.6f}",
                f"{f.onset_velocity.precision:.6f}",
                f"{f.onset_velocity.recall:.6f}",
                f"{f.onset_velocity.f1:.6f}",
            ])
        return buf.getvalue()


def evaluate_scores(name: str, ref: Score, est: Score) -> FileEvaluation:
    return FileEvaluation(name, match_onsets(ref, est),
                          match_onset_velocity(ref, est))


def evaluate_files(ref_paths, est_paths) -> CorpusReport:
    """Evaluate paired MIDI files; unreadable pairs become error rows."""
    if len(ref_paths) != len(est_paths):
        raise ValueError("ref/est path lists differ in length")
    report = CorpusReport()
    ordered = sorted(zip(ref_paths, est_paths), key=lambda p: str(p[0]))
    for ref_path, est_path in ordered:
        name = Path(ref_path).name
        try:
            ref = parse_midi(Path(ref_path).read_bytes())
            est = parse_midi(Path(est_path).read_bytes())
        except (OSError, ValueError) as exc:
            report.files.append(FileEvaluation(name, error=str(exc)))
            continue
        report.files.append(evaluate_scores(name, ref, est))
    return report
