"""Ground-truth writers: RTTM speaker segments, CTM word alignments,
frame-level VAD labels, and the run manifest.

All timestamps in RTTM/CTM are written with three decimals.  Onset and
segment end are each rounded to the millisecond grid and the printed
duration is their difference, so parsed segments reconstruct rounded
interval endpoints exactly and interval arithmetic on a parsed file stays
within one half-millisecond per boundary of the true timeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

Segment = tuple[str, float, float]  # (speaker_id, onset_s, duration_s)
WordMark = tuple[str, str, float, float]  # (speaker_id, text, onset_s, duration_s)


@dataclass(frozen=True)
class SessionAnnotation:
    """Exact ground truth for one finished session."""

    session_id: str
    segments: list[Segment]
    words: list[WordMark]
    actual_length: float
    silence_ratio: float
    overlap_ratio: float
    silence_target_mean: float
    overlap_target_mean: float
    base_seed: int
    session_index: int


def _fmt_interval(onset: float, duration: float) -> tuple[str, str]:
    """Millisecond-anchored 3-decimal strings for an interval."""
    onset_ms = round(onset * 1000.0)
    end_ms = round((onset + duration) * 1000.0)
    return f"{onset_ms / 1000.0:.3f}", f"{(end_ms - onset_ms) / 1000.0:.3f}"


def merge_adjacent_segments(segments: list[Segment]) -> list[Segment]:
    """Fuse consecutive same-speaker segments that touch or overlap.

    Segments separated by any silence stay distinct so merged output still
    reproduces the session's silence accounting.
    """
    merged: list[Segment] = []
    for speaker_id, onset, duration in segments:
        if merged:
            prev_speaker, prev_onset, prev_duration = merged[-1]
            prev_end = prev_onset + prev_duration
            if prev_speaker == speaker_id and onset <= prev_end + 1e-9:
                new_end = max(prev_end, onset + duration)
                merged[-1] = (prev_speaker, prev_onset, new_end - prev_onset)
                continue
        merged.append((speaker_id, onset, duration))
    return merged


def rttm_text(ann: SessionAnnotation, merge_same_speaker: bool = False) -> str:
    """Full RTTM file content for one session.

    Line format (single spaces):
    ``SPEAKER <session_id> 1 <onset> <duration> <NA> <NA> <speaker_id> <NA> <NA>``

    By default every placed sentence is its own segment; merge_same_speaker
    fuses back-to-back sentences from one speaker into a single line.
    """
    segments = list(ann.segments)
    if merge_same_speaker:
        segments = merge_adjacent_segments(segments)
    lines = []
    for speaker_id, onset, duration in segments:
        on, dur = _fmt_interval(onset, duration)
        lines.append(f"SPEAKER {ann.session_id} 1 {on} {dur} <NA> <NA> {speaker_id} <NA> <NA>\n")
    return "".join(lines)


def write_rttm(ann: SessionAnnotation, path: str | Path, merge_same_speaker: bool = False) -> Path:
    """Write one RTTM line per speaker segment; see rttm_text for the format."""
    path = Path(path)
    path.write_text(rttm_text(ann, merge_same_speaker), encoding="utf-8")
    return path


def write_ctm(ann: SessionAnnotation, path: str | Path) -> Path:
    """Write one CTM line per word: ``<session_id> 1 <onset> <duration> <word>``."""
    path = Path(path)
    lines = []
    for _speaker_id, text, onset, duration in ann.words:
        on, dur = _fmt_interval(onset, duration)
        lines.append(f"{ann.session_id} 1 {on} {dur} {text}\n")
    path.write_text("".join(lines), encoding="utf-8")
    return path


def vad_frame_labels(ann: SessionAnnotation, frame_length: float) -> list[int]:
    """Binary speech labels on a fixed frame grid.

    A frame is speech iff word intervals cover strictly more than half of it.
    Word intervals are merged first so adjacent words cannot split coverage.
    The grid spans ceil(actual_length / frame_length) frames.
    """
    if frame_length <= 0.0:
        raise ValueError(f"frame_length must be positive, got {frame_length}")
    n_frames = max(0, math.ceil(ann.actual_length / frame_length - 1e-9))
    coverage = [0.0] * n_frames

    intervals = sorted((onset, onset + dur) for _spk, _text, onset, dur in ann.words)
    merged: list[tuple[float, float]] = []
    for start, end in intervals:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))

    for start, end in merged:
        first = max(0, int(start / frame_length))
        last = min(n_frames - 1, int(end / frame_length))
        for i in range(first, last + 1):
            lo = i * frame_length
            coverage[i] += max(0.0, min(end, lo + frame_length) - max(start, lo))

    half = frame_length / 2.0
    return [1 if c > half else 0 for c in coverage]


def write_vad_labels(ann: SessionAnnotation, frame_length: float, path: str | Path) -> Path:
    """Write frame labels as one 0/1 per line."""
    path = Path(path)
    labels = vad_frame_labels(ann, frame_length)
    path.write_text("".join(f"{v}\n" for v in labels), encoding="utf-8")
    return path


def write_manifest(records: list[dict], path: str | Path) -> Path:
    """Write the run manifest: one JSON record per session, sorted by index."""
    path = Path(path)
    ordered = sorted(records, key=lambda r: r["session_index"])
    with path.open("w", encoding="utf-8") as fh:
        for record in ordered:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return path


def manifest_record(
    ann: SessionAnnotation,
    wav: str,
    rttm: str,
    ctm: str,
    vad: str,
) -> dict:
    """Build one manifest record; file fields are paths relative to the manifest."""
    return {
        "session_id": ann.session_id,
        "wav": wav,
        "rttm": rttm,
        "ctm": ctm,
        "vad": vad,
        "actual_length": ann.actual_length,
        "silence_ratio": ann.silence_ratio,
        "overlap_ratio": ann.overlap_ratio,
        "silence_target_mean": ann.silence_target_mean,
        "overlap_target_mean": ann.overlap_target_mean,
        "seed": ann.base_seed,
        "session_index": ann.session_index,
    }


def read_run_manifest(path: str | Path) -> list[dict]:
    """Read a run manifest back as a list of records."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid manifest line ({exc})") from exc
    return records
