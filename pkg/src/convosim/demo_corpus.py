"""Procedural tone-burst corpus for demos and tests.

Real source corpora need forced-aligned speech, which is heavy to ship.
This builder fabricates one: each speaker gets a base pitch and a set of
fixed-length utterance WAVs filled with enveloped tone "words" separated by
short pauses, plus a manifest with exact word timestamps.  Word boundaries
land on integer sample counts, and word durations are whole milliseconds
whenever the sample rate divides into milliseconds evenly: the placement
engine keeps session boundaries on the millisecond grid only when source
durations are, and annotation files print milliseconds.
"""

from __future__ import annotations

import argparse
import json
import math
import wave
from pathlib import Path

import numpy as np

# Keep generated words strictly inside the loader's default keep-window.
_MIN_WORD_S = 0.25
_MAX_WORD_S = 0.75
_MIN_GAP_S = 0.08
_MAX_GAP_S = 0.20
_FADE_S = 0.01


def _tone_word(n_samples: int, freq: float, amplitude: float, sample_rate: int) -> np.ndarray:
    t = np.arange(n_samples, dtype=np.float64) / sample_rate
    x = amplitude * np.sin(2.0 * math.pi * freq * t)
    fade = min(int(round(_FADE_S * sample_rate)), n_samples // 2)
    if fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0.0, math.pi, fade))
        x[:fade] *= ramp
        x[-fade:] *= ramp[::-1]
    return x


def build_demo_corpus(
    out_dir: str | Path,
    num_speakers: int = 10,
    utterances_per_speaker: int = 6,
    utterance_length: float = 30.0,
    sample_rate: int = 8000,
    seed: int = 20240901,
) -> Path:
    """Generate WAVs plus manifest.jsonl under out_dir; returns the manifest path.

    Deterministic in the seed.  Total audio is num_speakers *
    utterances_per_speaker * utterance_length seconds (the defaults give 30
    minutes across 10 speakers).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    utt_samples = int(round(utterance_length * sample_rate))
    # Samples per millisecond; 1 disables the grid for awkward rates.
    word_grid = sample_rate // 1000 if sample_rate % 1000 == 0 else 1
    records = []
    word_counter = 0

    for spk in range(num_speakers):
        base_freq = 120.0 * 2.0 ** (spk / 8.0)
        speaker_id = f"spk{spk:02d}"
        spk_dir = out_dir / speaker_id
        spk_dir.mkdir(exist_ok=True)
        for utt in range(utterances_per_speaker):
            buf = np.zeros(utt_samples, dtype=np.float64)
            words = []
            cursor = int(rng.integers(0, int(0.1 * sample_rate)))
            while True:
                n_word = word_grid * int(
                    rng.integers(
                        int(round(_MIN_WORD_S * sample_rate)) // word_grid,
                        int(round(_MAX_WORD_S * sample_rate)) // word_grid + 1,
                    )
                )
                if cursor + n_word > utt_samples:
                    break
                # Detune up to a whole tone so words are distinguishable.
                freq = base_freq * 2.0 ** (rng.uniform(-2.0, 2.0) / 12.0)
                amplitude = rng.uniform(0.15, 0.30)
                buf[cursor : cursor + n_word] = _tone_word(n_word, freq, amplitude, sample_rate)
                words.append(
                    {
                        "word": f"w{word_counter:05d}",
                        "onset": cursor / sample_rate,
                        "duration": n_word / sample_rate,
                    }
                )
                word_counter += 1
                gap = int(
                    rng.integers(
                        int(round(_MIN_GAP_S * sample_rate)),
                        int(round(_MAX_GAP_S * sample_rate)) + 1,
                    )
                )
                cursor += n_word + gap

            rel_path = f"{speaker_id}/utt{utt:02d}.wav"
            pcm = np.clip(np.round(buf * 32767.0), -32768, 32767).astype(np.int16)
            with wave.open(str(out_dir / rel_path), "wb") as wav:
                wav.setnchannels(1)
                wav.setsampwidth(2)
                wav.setframerate(sample_rate)
                wav.writeframes(pcm.tobytes())
            records.append(
                {"audio_filepath": rel_path, "speaker_id": speaker_id, "words": words}
            )

    manifest_path = out_dir / "manifest.jsonl"
    with manifest_path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return manifest_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Generate a synthetic tone-burst source corpus.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--speakers", type=int, default=10)
    parser.add_argument("--utterances", type=int, default=6, help="utterances per speaker")
    parser.add_argument("--length", type=float, default=30.0, help="seconds per utterance")
    parser.add_argument("--sample-rate", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=20240901)
    args = parser.parse_args(argv)
    manifest = build_demo_corpus(
        args.out,
        num_speakers=args.speakers,
        utterances_per_speaker=args.utterances,
        utterance_length=args.length,
        sample_rate=args.sample_rate,
        seed=args.seed,
    )
    print(manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
