"""Source-corpus ingestion: word-aligned single-speaker utterances.

The corpus manifest is line-delimited JSON, one utterance record per line::

    {"audio_filepath": "spk0/utt3.wav",
     "speaker_id": "spk0",
     "words": [{"word": "hello", "onset": 0.12, "duration": 0.31}, ...]}

``audio_filepath`` is resolved relative to the manifest's directory.  Audio
must be mono 16-bit PCM WAV and every file in one corpus must share a single
sample rate; onsets/durations are seconds within the referenced file.  Word
alignments are taken as given; no aligner runs here.
"""

from __future__ import annotations

import json
import logging
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sampler import SeededRng

logger = logging.getLogger(__name__)

# Slack for float comparisons against file/word boundaries, in seconds.
_EDGE_EPS = 1e-6


class ManifestError(ValueError):
    """A corpus manifest entry is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class SourceWord:
    """One aligned word inside a source audio file."""

    text: str
    onset: float
    duration: float
    audio_ref: str


@dataclass(frozen=True)
class SourceUtterance:
    """An ordered, non-overlapping word sequence from one speaker."""

    speaker_id: str
    audio_ref: str
    words: tuple[SourceWord, ...]


@dataclass(frozen=True)
class AudioFileInfo:
    path: Path
    num_samples: int


@dataclass(frozen=True)
class SourceCorpus:
    """Immutable speaker-indexed view of the source corpus.

    Safe to share across session workers; loading happens once up front.
    """

    utterances: dict[str, tuple[SourceUtterance, ...]]
    sample_rate: int
    audio_files: dict[str, AudioFileInfo] = field(repr=False)
    dropped_word_count: int = 0

    @property
    def speaker_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.utterances))

    def audio_path(self, audio_ref: str) -> Path:
        return self.audio_files[audio_ref].path


def _read_wav_header(path: Path) -> tuple[int, int]:
    """Return (sample_rate, num_samples) after validating mono 16-bit PCM."""
    try:
        with wave.open(str(path), "rb") as wav:
            if wav.getnchannels() != 1:
                raise ManifestError(f"{path}: expected mono audio, got {wav.getnchannels()} channels")
            if wav.getsampwidth() != 2:
                raise ManifestError(f"{path}: expected 16-bit PCM, got {wav.getsampwidth() * 8}-bit")
            return wav.getframerate(), wav.getnframes()
    except wave.Error as exc:
        raise ManifestError(f"{path}: not a readable PCM WAV file ({exc})") from exc


def _parse_words(entry: dict, audio_ref: str, where: str, audio_len_s: float) -> list[SourceWord]:
    raw_words = entry.get("words")
    if not isinstance(raw_words, list) or not raw_words:
        raise ManifestError(f"{where}: entry must carry a non-empty 'words' list")
    words: list[SourceWord] = []
    prev_end = 0.0
    for i, raw in enumerate(raw_words):
        try:
            text = str(raw["word"])
            onset = float(raw["onset"])
            duration = float(raw["duration"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{where}: word {i} is malformed ({exc})") from exc
        if duration <= 0.0:
            raise ManifestError(f"{where}: word {i} ({text!r}) has non-positive duration {duration}")
        if onset < 0.0:
            raise ManifestError(f"{where}: word {i} ({text!r}) has negative onset {onset}")
        if onset + duration > audio_len_s + _EDGE_EPS:
            raise ManifestError(
                f"{where}: word {i} ({text!r}) ends at {onset + duration:.3f}s, "
                f"beyond the {audio_len_s:.3f}s audio file"
            )
        if onset < prev_end - _EDGE_EPS:
            raise ManifestError(f"{where}: word {i} ({text!r}) overlaps the previous word")
        prev_end = onset + duration
        words.append(SourceWord(text=text, onset=onset, duration=duration, audio_ref=audio_ref))
    return words


def load_corpus(
    manifest_path: str | Path,
    min_word_duration: float = 0.2,
    max_word_duration: float = 0.8,
) -> SourceCorpus:
    """Load and validate a word-aligned corpus from a line-delimited manifest.

    Words whose duration falls outside [min_word_duration, max_word_duration]
    are dropped (logged as one warning with the total count); utterances left
    empty by the filter are discarded.  A speaker with no surviving words is
    an error, as is any sample-rate mismatch between files.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    base_dir = manifest_path.parent

    utterances: dict[str, list[SourceUtterance]] = {}
    audio_files: dict[str, AudioFileInfo] = {}
    seen_speakers: set[str] = set()
    sample_rate: int | None = None
    dropped = 0

    with manifest_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{manifest_path}:{lineno}"
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{where}: invalid JSON ({exc})") from exc
            try:
                audio_ref = str(entry["audio_filepath"])
                speaker_id = str(entry["speaker_id"])
            except KeyError as exc:
                raise ManifestError(f"{where}: missing required field {exc}") from exc

            if audio_ref in audio_files:
                info = audio_files[audio_ref]
                rate = sample_rate
                n_samples = info.num_samples
            else:
                path = Path(audio_ref)
                if not path.is_absolute():
                    path = base_dir / path
                if not path.is_file():
                    raise ManifestError(f"{where}: audio file not found: {path}")
                rate, n_samples = _read_wav_header(path)
                audio_files[audio_ref] = AudioFileInfo(path=path, num_samples=n_samples)
            if sample_rate is None:
                sample_rate = rate
            elif rate != sample_rate:
                raise ManifestError(
                    f"{where}: sample rate {rate} Hz does not match corpus rate {sample_rate} Hz"
                )

            seen_speakers.add(speaker_id)
            words = _parse_words(entry, audio_ref, where, n_samples / sample_rate)
            kept = [w for w in words if min_word_duration <= w.duration <= max_word_duration]
            dropped += len(words) - len(kept)
            if not kept:
                continue
            utterances.setdefault(speaker_id, []).append(
                SourceUtterance(speaker_id=speaker_id, audio_ref=audio_ref, words=tuple(kept))
            )

    if sample_rate is None:
        raise ManifestError(f"{manifest_path}: manifest contains no utterance records")
    if dropped:
        logger.warning(
            "%s: dropped %d word(s) outside the [%g, %g]s duration window",
            manifest_path, dropped, min_word_duration, max_word_duration,
        )

    empty = seen_speakers - utterances.keys()
    if empty:
        raise ManifestError(f"{manifest_path}: speaker(s) with no usable words: {sorted(empty)}")

    return SourceCorpus(
        utterances={spk: tuple(utts) for spk, utts in sorted(utterances.items())},
        sample_rate=sample_rate,
        audio_files=audio_files,
        dropped_word_count=dropped,
    )


def sample_speakers(corpus: SourceCorpus, n_spk: int, rng: SeededRng) -> list[str]:
    """Draw n_spk distinct speaker ids uniformly without replacement."""
    ids = corpus.speaker_ids
    if n_spk < 1:
        raise ValueError(f"n_spk must be >= 1, got {n_spk}")
    if n_spk > len(ids):
        raise ValueError(f"requested {n_spk} speakers but corpus has only {len(ids)}")
    picked = rng.choice(len(ids), size=n_spk, replace=False)
    return [ids[i] for i in picked]


def read_audio(corpus: SourceCorpus, audio_ref: str) -> np.ndarray:
    """Read one source file in full as int16 samples."""
    info = corpus.audio_files[audio_ref]
    try:
        with wave.open(str(info.path), "rb") as wav:
            data = wav.readframes(wav.getnframes())
    except (OSError, wave.Error) as exc:
        raise ManifestError(f"failed to read audio {info.path}: {exc}") from exc
    return np.frombuffer(data, dtype=np.int16)


def read_word_audio(corpus: SourceCorpus, word: SourceWord) -> np.ndarray:
    """Cut one word's samples from its source file.

    The buffer holds exactly round(duration * sample_rate) int16 samples
    starting at the aligned onset.
    """
    rate = corpus.sample_rate
    start = int(round(word.onset * rate))
    count = int(round(word.duration * rate))
    info = corpus.audio_files[word.audio_ref]
    try:
        with wave.open(str(info.path), "rb") as wav:
            wav.setpos(start)
            data = wav.readframes(count)
    except (OSError, wave.Error) as exc:
        raise ManifestError(f"failed to read audio {info.path}: {exc}") from exc
    buf = np.frombuffer(data, dtype=np.int16)
    if len(buf) != count:
        raise ManifestError(
            f"{info.path}: word {word.text!r} wanted {count} samples at {start}, got {len(buf)}"
        )
    return buf
