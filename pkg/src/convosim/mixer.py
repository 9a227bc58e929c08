"""Render placed sessions into mixed 16-bit PCM audio.

Words are cut from the source files and added onto a float32 session buffer
in timeline order (the documented summation order, so renders are
reproducible bit for bit).  Per-speaker gain, optional per-sentence gain
perturbation, and optional background noise at a sampled SNR are applied
here; the timeline itself is never altered.
"""

from __future__ import annotations

import json
import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import ManifestError, SourceCorpus, read_audio
from .engine import SessionTimeline
from .sampler import SeededRng

# int16 full scale, used both when lifting source samples to float and when
# converting the mix back.  The symmetric 32768 makes a unit-gain word
# round-trip bit-exactly.
_FULL_SCALE = 32768.0
_PEAK_LIMIT = 32767.0 / 32768.0


class ClippingError(RuntimeError):
    """The mix exceeds int16 range and normalization is disabled."""


@dataclass(frozen=True)
class AugmentationConfig:
    """Optional rendering effects; a None field disables that effect.

    gain_perturb_db_range draws one dB offset per sentence.  noise_manifest
    points at a JSONL file of noise recordings; snr_db_range draws the
    session's speech-to-noise target.  Noise settings come as a pair: a
    manifest without an SNR range (or vice versa) is rejected.
    """

    gain_perturb_db_range: tuple[float, float] | None = None
    noise_manifest: str | None = None
    snr_db_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        for name in ("gain_perturb_db_range", "snr_db_range"):
            bounds = getattr(self, name)
            if bounds is not None:
                lo, hi = bounds
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    raise ValueError(f"{name} must be finite, got ({lo}, {hi})")
                if lo > hi:
                    raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if (self.noise_manifest is None) != (self.snr_db_range is None):
            raise ValueError("noise_manifest and snr_db_range must be set together")


@dataclass(frozen=True)
class RenderResult:
    """Finished mix plus what the renderer did to it."""

    samples: np.ndarray
    sample_rate: int
    normalization: float
    snr_db: float | None


def measure_snr(speech: np.ndarray, noise: np.ndarray, mask: np.ndarray) -> float:
    """Speech-to-noise power ratio in dB.

    Speech power is averaged over mask-selected samples only, so silence in
    the session does not dilute it; noise power is averaged over the whole
    buffer.
    """
    if len(speech) != len(noise) or len(speech) != len(mask):
        raise ValueError(
            f"length mismatch: speech {len(speech)}, noise {len(noise)}, mask {len(mask)}"
        )
    masked = np.asarray(speech, dtype=np.float64)[np.asarray(mask, dtype=bool)]
    if masked.size == 0:
        raise ValueError("speech mask selects no samples")
    p_speech = float(np.mean(np.square(masked)))
    p_noise = float(np.mean(np.square(np.asarray(noise, dtype=np.float64))))
    if p_speech == 0.0:
        raise ValueError("masked speech region is silent")
    if p_noise == 0.0:
        raise ValueError("noise buffer is silent")
    return 10.0 * math.log10(p_speech / p_noise)


def load_noise_files(manifest_path: str | Path) -> list[Path]:
    """Read noise file paths from a JSONL manifest.

    Each line needs an audio_filepath, resolved relative to the manifest.
    """
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read noise manifest {manifest_path}: {exc}") from exc
    paths: list[Path] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{manifest_path}:{lineno}: bad JSON ({exc})") from exc
        if not isinstance(entry, dict) or "audio_filepath" not in entry:
            raise ManifestError(f"{manifest_path}:{lineno}: missing audio_filepath")
        paths.append((manifest_path.parent / entry["audio_filepath"]).resolve())
    if not paths:
        raise ManifestError(f"noise manifest {manifest_path} lists no files")
    return paths


def _read_noise_file(path: Path, sample_rate: int) -> np.ndarray:
    try:
        with wave.open(str(path), "rb") as wav:
            if wav.getnchannels() != 1 or wav.getsampwidth() != 2:
                raise ManifestError(f"{path}: noise must be mono 16-bit PCM")
            if wav.getframerate() != sample_rate:
                raise ManifestError(
                    f"{path}: noise sample rate {wav.getframerate()} != corpus {sample_rate}"
                )
            data = wav.readframes(wav.getnframes())
    except (OSError, wave.Error) as exc:
        raise ManifestError(f"failed to read noise {path}: {exc}") from exc
    samples = np.frombuffer(data, dtype=np.int16)
    if samples.size == 0:
        raise ManifestError(f"{path}: noise file is empty")
    return samples.astype(np.float32) / _FULL_SCALE


def _tile_noise(
    noise_paths: list[Path], n_samples: int, sample_rate: int, rng: SeededRng
) -> np.ndarray:
    """Concatenate randomly chosen noise files until the session is covered."""
    pieces: list[np.ndarray] = []
    total = 0
    while total < n_samples:
        idx = int(rng.integers(len(noise_paths)))
        piece = _read_noise_file(noise_paths[idx], sample_rate)
        pieces.append(piece)
        total += len(piece)
    return np.concatenate(pieces)[:n_samples]


def render_session(
    timeline: SessionTimeline,
    corpus: SourceCorpus,
    aug: AugmentationConfig,
    rng: SeededRng,
    normalize_on_clip: bool = True,
) -> RenderResult:
    """Mix one session into int16 samples.

    Draw order against rng is fixed: one perturbation per sentence in
    timeline order (when enabled), then noise file choices, then the target
    SNR.  Output length is round(session_length * sample_rate); the mix is
    peak-normalized only if it would clip, and the factor applied (1.0
    otherwise) is recorded in the result.
    """
    sr = timeline.sample_rate
    n_samples = int(round(timeline.session_length * sr))
    speech = np.zeros(n_samples, dtype=np.float32)
    mask = np.zeros(n_samples, dtype=bool)
    files: dict[str, np.ndarray] = {}

    for sentence in timeline.placed:
        gain = timeline.gains[sentence.speaker_id]
        if aug.gain_perturb_db_range is not None:
            lo, hi = aug.gain_perturb_db_range
            gain *= 10.0 ** (rng.uniform(lo, hi) / 20.0)
        for word, onset in sentence.words:
            if word.audio_ref not in files:
                files[word.audio_ref] = read_audio(corpus, word.audio_ref)
            source = files[word.audio_ref]
            src_start = int(round(word.onset * sr))
            count = int(round(word.duration * sr))
            clip = source[src_start : src_start + count]
            dst_start = int(round(onset * sr))
            # The final word may run to the buffer's exact end; clamp for
            # the one-sample slack rounding can introduce.
            dst_end = min(dst_start + len(clip), n_samples)
            width = dst_end - dst_start
            if width <= 0:
                continue
            speech[dst_start:dst_end] += (
                clip[:width].astype(np.float32) / _FULL_SCALE * np.float32(gain)
            )
            mask[dst_start:dst_end] = True

    snr_db: float | None = None
    if aug.noise_manifest is not None:
        noise_paths = load_noise_files(aug.noise_manifest)
        noise = _tile_noise(noise_paths, n_samples, sr, rng)
        lo, hi = aug.snr_db_range  # type: ignore[misc]
        snr_db = float(rng.uniform(lo, hi))
        current = measure_snr(speech, noise, mask)
        # Scaling noise by g moves the SNR by -20*log10(g) dB.
        noise *= np.float32(10.0 ** ((current - snr_db) / 20.0))
        mix = speech + noise
    else:
        mix = speech

    normalization = 1.0
    peak = float(np.max(np.abs(mix))) if n_samples else 0.0
    if peak > _PEAK_LIMIT:
        if not normalize_on_clip:
            raise ClippingError(f"mix peak {peak:.4f} exceeds {_PEAK_LIMIT:.6f}")
        normalization = _PEAK_LIMIT / peak
        mix = mix * np.float32(normalization)

    samples = np.clip(np.round(mix.astype(np.float64) * _FULL_SCALE), -32768, 32767).astype(
        np.int16
    )
    return RenderResult(samples=samples, sample_rate=sr, normalization=normalization, snr_db=snr_db)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> Path:
    """Write mono 16-bit PCM."""
    path = Path(path)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(np.asarray(samples, dtype=np.int16).tobytes())
    return path
