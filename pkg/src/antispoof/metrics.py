"""Equal-error-rate computation and score-file I/O.

Scores follow the bona-fide-positive convention: an utterance is
accepted as bona-fide when its score clears the threshold, so the
false-acceptance rate is measured on spoof scores and the
false-rejection rate on bona-fide scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ParseError


@dataclass
class ScoreRecord:
    utt_id: str
    score: float
    label: str | None = None  # "bonafide" | "spoof" | None


def _split_scores(records: list[ScoreRecord]) -> tuple[np.ndarray, np.ndarray]:
    bona = np.array([r.score for r in records if r.label == "bonafide"], dtype=np.float64)
    spoof = np.array([r.score for r in records if r.label == "spoof"], dtype=np.float64)
    if bona.size == 0 or spoof.size == 0:
        raise MetricError(f"need both classes to compute error rates, got {bona.size} bonafide / {spoof.size} spoof")
    return bona, spoof


def det_points(records: list[ScoreRecord]) -> list[tuple[float, float, float]]:
    """(false-acceptance, false-rejection, threshold) at every distinct
    score plus a +inf sentinel; acceptance means score >= threshold."""
    bona, spoof = _split_scores(records)
    thresholds = np.unique(np.concatenate([bona, spoof]))
    thresholds = np.append(thresholds, np.inf)
    # score >= t  <=>  index past the last strictly-smaller element
    far = 1.0 - np.searchsorted(np.sort(spoof), thresholds, side="left") / spoof.size
    frr = np.searchsorted(np.sort(bona), thresholds, side="left") / bona.size
    return [(float(fa), float(fr), float(t)) for fa, fr, t in zip(far, frr, thresholds)]


def eer(records: list[ScoreRecord]) -> tuple[float, float]:
    """Interpolated equal error rate and its threshold.

    Walks the operating points in threshold order; FAR falls from 1 and
    FRR rises from 0, so FAR - FRR crosses zero exactly once.  An exact
    zero at an operating point is returned as-is (ties toward the lower
    threshold); otherwise the two bracketing points are interpolated
    linearly.
    """
    points = det_points(records)
    prev_fa, prev_fr, prev_t = None, None, None
    for fa, fr, t in points:
        diff = fa - fr
        if diff <= 0.0:
            if diff == 0.0 or prev_fa is None:
                return fa, t
            prev_diff = prev_fa - prev_fr
            frac = prev_diff / (prev_diff - diff)
            rate = prev_fa + frac * (fa - prev_fa)
            return float(rate), float(prev_t + frac * (t - prev_t) if np.isfinite(t) else prev_t)
        prev_fa, prev_fr, prev_t = fa, fr, t
    raise MetricError("error rates never crossed; scores may be non-finite")


def write_scores(path, records: list[ScoreRecord]):
    with open(path, "w") as f:
        for r in records:
            f.write(f"{r.utt_id} {r.score:.6f}\n")


def read_scores(path) -> list[ScoreRecord]:
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'utt_id score', got {line!r}")
            try:
                score = float(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: score {parts[1]!r} is not a number")
            records.append(ScoreRecord(parts[0], score))
    return records


def write_report(path, lines: dict[str, float]):
    """Line-oriented key=value metrics file for plotting."""
    with open(path, "w") as f:
        for key, value in lines.items():
            f.write(f"{key}={value:.6f}\n")
