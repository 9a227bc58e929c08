"""Silence/overlap statistics of annotated sessions.

Works on speaker segments from RTTM files (real or simulated).  Overlap is
concurrency-weighted: a span where three speakers talk at once counts twice.
The overlap ratio divides by union speech time, matching the simulator's
accounting, and the silence ratio divides by session length.  Variances use
the population (n) divisor so fitted Beta parameters round-trip the
method-of-moments estimates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotate import Segment
from .sampler import BetaParams, RatioMoments, beta_from_moments

logger = logging.getLogger(__name__)

# Parsed segment ends may poke past the stated session length by RTTM
# rounding; anything worse than this is treated as caller error.
_LENGTH_SLACK = 0.01


class RttmParseError(ValueError):
    """An RTTM line could not be parsed."""


@dataclass(frozen=True)
class DatasetStats:
    """Per-session ratios plus their aggregate moments and Beta fits."""

    silence_ratios: list[float]
    overlap_ratios: list[float]
    silence_mean: float
    silence_var: float | None
    overlap_mean: float
    overlap_var: float | None
    silence_beta: BetaParams | None
    overlap_beta: BetaParams | None
    num_sessions: int


def session_times(segments: list[Segment], session_length: float) -> tuple[float, float, float]:
    """Sweep the segment set and return (silence, overlap, union) in seconds.

    union counts time covered by at least one segment; overlap integrates
    concurrency minus one wherever two or more segments are active; silence
    is the remainder of the session.
    """
    if session_length <= 0.0:
        raise ValueError(f"session_length must be positive, got {session_length}")
    events: list[tuple[float, int]] = []
    for _speaker, onset, duration in segments:
        if duration < 0.0 or onset < 0.0:
            raise ValueError(f"segment with negative onset/duration: ({onset}, {duration})")
        end = onset + duration
        if end > session_length + _LENGTH_SLACK:
            raise ValueError(
                f"segment ends at {end:.3f}s, beyond session length {session_length:.3f}s"
            )
        events.append((onset, 1))
        events.append((end, -1))
    # Close segments before opening new ones at identical times.
    events.sort(key=lambda e: (e[0], e[1]))

    union = 0.0
    overlap = 0.0
    active = 0
    prev_t = 0.0
    for t, delta in events:
        span = t - prev_t
        if active >= 1:
            union += span
            overlap += (active - 1) * span
        active += delta
        prev_t = t
    silence = session_length - union
    return silence, overlap, union


def session_ratios(segments: list[Segment], session_length: float) -> tuple[float, float]:
    """Return (silence ratio, overlap ratio) for one session.

    Silence ratio is silence over session length; overlap ratio is
    concurrency-weighted overlap over union speech, defined as 0 for an
    empty session.
    """
    silence, overlap, union = session_times(segments, session_length)
    overlap_ratio = overlap / union if union > 0.0 else 0.0
    return silence / session_length, overlap_ratio


def aggregate_stats(ratio_pairs: list[tuple[float, float]]) -> DatasetStats:
    """Aggregate per-session (silence, overlap) ratios into dataset moments.

    Variance needs at least two sessions and is reported as None otherwise.
    Beta parameters are fitted where the (mean, variance) pair is feasible;
    an infeasible or degenerate pair leaves the fit as None with a notice.
    """
    if not ratio_pairs:
        raise ValueError("no sessions to aggregate")
    sil = [s for s, _ in ratio_pairs]
    ovl = [o for _, o in ratio_pairs]
    n = len(ratio_pairs)

    def moments(values: list[float]) -> tuple[float, float | None]:
        mean = float(np.mean(values))
        return mean, (float(np.var(values)) if n >= 2 else None)

    def fit(mean: float, var: float | None, label: str) -> BetaParams | None:
        if var is None:
            return None
        try:
            return beta_from_moments(RatioMoments(mean=mean, variance=var))
        except ValueError as exc:
            logger.info("no Beta fit for %s ratios: %s", label, exc)
            return None

    sil_mean, sil_var = moments(sil)
    ovl_mean, ovl_var = moments(ovl)
    return DatasetStats(
        silence_ratios=sil,
        overlap_ratios=ovl,
        silence_mean=sil_mean,
        silence_var=sil_var,
        overlap_mean=ovl_mean,
        overlap_var=ovl_var,
        silence_beta=fit(sil_mean, sil_var, "silence"),
        overlap_beta=fit(ovl_mean, ovl_var, "overlap"),
        num_sessions=n,
    )


def histogram(ratios: list[float], bin_count: int) -> np.ndarray:
    """Counts over bin_count equal-width bins spanning [0, 1].

    Bins are half-open [lo, hi) except the last, which includes 1.0, so a
    boundary value lands in the upper bin.
    """
    if bin_count < 1:
        raise ValueError(f"bin_count must be >= 1, got {bin_count}")
    counts, _edges = np.histogram(np.asarray(ratios, dtype=float), bins=bin_count, range=(0.0, 1.0))
    return counts


def histogram_rows(named_ratios: list[tuple[str, list[float]]], bin_count: int) -> list[dict]:
    """Overlayed histogram rows for CSV output: one row per bin.

    Each row maps bin_lo/bin_hi plus one count column per named dataset.
    """
    edges = np.linspace(0.0, 1.0, bin_count + 1)
    columns = {name: histogram(values, bin_count) for name, values in named_ratios}
    rows = []
    for i in range(bin_count):
        row: dict = {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1])}
        for name, counts in columns.items():
            row[name] = int(counts[i])
        rows.append(row)
    return rows


def parse_rttm(path: str | Path) -> list[Segment]:
    """Parse speaker segments from an RTTM file.

    Tolerates repeated whitespace and skips non-SPEAKER record types; a
    SPEAKER line with the wrong field count or unparsable numbers raises
    RttmParseError naming the line.
    """
    path = Path(path)
    segments: list[Segment] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if fields[0] != "SPEAKER":
                continue
            if len(fields) != 10:
                raise RttmParseError(
                    f"{path}:{lineno}: expected 10 fields on a SPEAKER line, got {len(fields)}"
                )
            try:
                onset = float(fields[3])
                duration = float(fields[4])
            except ValueError as exc:
                raise RttmParseError(f"{path}:{lineno}: bad onset/duration ({exc})") from exc
            segments.append((fields[7], onset, duration))
    return segments
