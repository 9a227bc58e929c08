"""Shared fixtures: synthetic source corpora and a config factory.

Corpora are generated once per test session.  The small corpus keeps unit
tests fast; the big one matches the statistical tests' documented setup
(10 speakers, about 30 minutes of audio).
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
import pytest

from convosim.corpus import SourceCorpus, load_corpus
from convosim.demo_corpus import build_demo_corpus
from convosim.engine import SimulationConfig
from convosim.sampler import NegBinomialParams, RatioMoments


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("corpus_small")
    build_demo_corpus(
        out, num_speakers=6, utterances_per_speaker=2, utterance_length=15.0, seed=7
    )
    return out


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir) -> SourceCorpus:
    return load_corpus(small_corpus_dir / "manifest.jsonl")


@pytest.fixture(scope="session")
def full_corpus_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("corpus_full")
    build_demo_corpus(out)
    return out


@pytest.fixture(scope="session")
def full_corpus(full_corpus_dir) -> SourceCorpus:
    return load_corpus(full_corpus_dir / "manifest.jsonl")


def make_config(**overrides) -> SimulationConfig:
    """A valid baseline SimulationConfig; override any field per test."""
    defaults = dict(
        session_length=60.0,
        num_sessions=1,
        num_speakers=4,
        turn_prob=0.9,
        silence_moments=RatioMoments(0.1473, 0.0061),
        overlap_moments=RatioMoments(0.0754, 0.0020),
        sentence_params=NegBinomialParams(k=2.0, p=0.4),
        dominance_var=0.04,
        volume_range=(0.7, 1.0),
        base_seed=17,
    )
    defaults.update(overrides)
    return SimulationConfig(**defaults)


def write_pcm_wav(path: Path, samples: np.ndarray, sample_rate: int, channels: int = 1) -> Path:
    """Raw WAV writer for fixture files, including deliberately odd ones."""
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(sample_rate)
        wav.writeframes(np.asarray(samples, dtype=np.int16).tobytes())
    return path
