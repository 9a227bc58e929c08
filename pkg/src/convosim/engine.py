"""Session simulation engine.

A session is built one sentence at a time.  Each loop iteration picks the
next speaker, draws a sentence length, pulls that many contiguous aligned
words from the speaker's source material, and then decides whether the new
sentence should follow a silence gap or overlap the previous sentence.  The
decision compares two running discrepancies (how far the session's silence
ratio and overlap ratio currently sit below their configured means) and
feeds whichever lags more.  The gap (or overlap) length is sized in closed
form so that, after placement, the corresponding ratio would exactly hit the
session's sampled target mean, then jittered through a Gamma draw around
that required amount.  The loop runs until the timeline reaches the desired
session length.

Accounting is kept in four accumulators: total placed silence, union
(non-overlapped) speech time, total overlapped time, and the running session
length, with running_length == speech_union + silence_total after every
placement.  Overlap only ever references the immediately preceding sentence
and is clamped below its duration, so the interval timeline reproduces the
accumulators exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .annotate import SessionAnnotation
from .corpus import SourceCorpus, SourceWord, sample_speakers
from .sampler import (
    NegBinomialParams,
    RatioMoments,
    SeededRng,
    beta_from_moments,
    derive_session_rng,
    gamma_params_for_gap,
    sample_gap,
    sample_sentence_length,
    sample_session_mean,
)

logger = logging.getLogger(__name__)

# An overlap may cover at most this fraction of either neighbouring sentence,
# so no sentence is ever fully swallowed and the timeline always advances.
OVERLAP_CAP = 0.9


@dataclass(frozen=True)
class SimulationConfig:
    """Dataset-level knobs shared by every session of a run."""

    session_length: float
    num_sessions: int
    num_speakers: int
    turn_prob: float
    silence_moments: RatioMoments
    overlap_moments: RatioMoments
    sentence_params: NegBinomialParams
    dominance_var: float = 0.0
    volume_range: tuple[float, float] = (1.0, 1.0)
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.session_length <= 0.0:
            raise ValueError(f"session_length must be positive, got {self.session_length}")
        if self.num_sessions < 1:
            raise ValueError(f"num_sessions must be >= 1, got {self.num_sessions}")
        if self.num_speakers < 1:
            raise ValueError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if not 0.0 <= self.turn_prob <= 1.0:
            raise ValueError(f"turn_prob must be in [0, 1], got {self.turn_prob}")
        if self.dominance_var < 0.0:
            raise ValueError(f"dominance_var must be >= 0, got {self.dominance_var}")
        lo, hi = self.volume_range
        if not 0.0 <= lo <= hi:
            raise ValueError(f"volume_range must satisfy 0 <= lo <= hi, got {self.volume_range}")
        if self.base_seed < 0:
            raise ValueError(f"base_seed must be nonnegative, got {self.base_seed}")


@dataclass
class SessionParams:
    """Per-session draws: speakers, their traits, and the two target means."""

    speaker_ids: list[str]
    dominance: np.ndarray
    gains: np.ndarray
    silence_target_mean: float
    overlap_target_mean: float
    rng: SeededRng
    base_seed: int
    session_index: int


@dataclass(frozen=True)
class PlacedSentence:
    """One sentence placed on the session timeline.

    words pairs each source word with its onset in session time; words are
    concatenated with no intra-sentence gaps.  preceding_silence and
    overlap_with_previous record the placement decision (at most one is
    nonzero; overlap holds the effective, clamped amount).
    """

    speaker_id: str
    onset: float
    duration: float
    words: tuple[tuple[SourceWord, float], ...]
    preceding_silence: float
    overlap_with_previous: float

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class SessionState:
    """Running accumulators of the simulation loop."""

    running_length: float = 0.0
    silence_total: float = 0.0
    speech_union: float = 0.0
    overlap_total: float = 0.0
    current_speaker: int = -1
    placed: list[PlacedSentence] = field(default_factory=list)


@dataclass(frozen=True)
class SentencePlan:
    """A built sentence not yet placed on the timeline."""

    speaker_id: str
    words: tuple[SourceWord, ...]
    duration: float


@dataclass(frozen=True)
class SessionTimeline:
    """Carrier handed to rendering and annotation."""

    placed: tuple[PlacedSentence, ...]
    session_length: float
    sample_rate: int
    gains: dict[str, float]


def sample_session_params(
    cfg: SimulationConfig, corpus: SourceCorpus, session_index: int
) -> SessionParams:
    """Draw everything a session needs up front from its own seeded stream.

    Draw order is fixed (speakers, dominance, gains, silence mean, overlap
    mean) and must not change: it defines the reproducibility contract.
    Dominance weights come from a normal centred on 1/num_speakers, clipped
    at zero and renormalised; if every weight clips, dominance falls back to
    uniform.
    """
    rng = derive_session_rng(cfg.base_seed, session_index)
    speaker_ids = sample_speakers(corpus, cfg.num_speakers, rng)

    n = cfg.num_speakers
    raw = rng.normal(loc=1.0 / n, scale=np.sqrt(cfg.dominance_var), size=n)
    weights = np.clip(raw, 0.0, None)
    total = float(weights.sum())
    if total <= 0.0:
        dominance = np.full(n, 1.0 / n)
    else:
        dominance = weights / total

    lo, hi = cfg.volume_range
    gains = rng.uniform(lo, hi, size=n)

    silence_mean = sample_session_mean(beta_from_moments(cfg.silence_moments), rng)
    overlap_mean = sample_session_mean(beta_from_moments(cfg.overlap_moments), rng)

    return SessionParams(
        speaker_ids=speaker_ids,
        dominance=dominance,
        gains=gains,
        silence_target_mean=silence_mean,
        overlap_target_mean=overlap_mean,
        rng=rng,
        base_seed=cfg.base_seed,
        session_index=session_index,
    )


def next_speaker(
    params: SessionParams, turn_prob: float, current: int, rng: SeededRng
) -> int:
    """Pick the speaker of the next sentence.

    The first sentence (current < 0) draws from the full dominance
    distribution.  Afterwards a uniform draw against turn_prob decides
    whether the turn moves; when it does, the new speaker is drawn from the
    dominance weights renormalised over everyone except the current speaker.
    """
    n = len(params.speaker_ids)
    if current < 0:
        return int(rng.choice(n, p=params.dominance))
    if float(rng.uniform()) >= turn_prob or n == 1:
        return current
    weights = params.dominance.copy()
    weights[current] = 0.0
    total = float(weights.sum())
    if total <= 0.0:
        weights = np.ones(n)
        weights[current] = 0.0
        total = float(n - 1)
    return int(rng.choice(n, p=weights / total))


def build_sentence(
    corpus: SourceCorpus,
    state: SessionState,
    length: int,
    speaker_id: str,
    rng: SeededRng,
) -> SentencePlan:
    """Pull a contiguous run of words for one sentence and book its speech time.

    The run starts at a uniformly chosen word of a uniformly chosen utterance
    of the speaker and continues into the speaker's subsequent utterances
    (cyclically) if it overruns.  Words are concatenated without gaps, so the
    sentence duration is the plain sum of word durations and silence
    accounting is untouched here.
    """
    if length < 1:
        raise ValueError(f"sentence length must be >= 1, got {length}")
    utterances = corpus.utterances[speaker_id]
    utt_idx = int(rng.integers(0, len(utterances)))
    word_idx = int(rng.integers(0, len(utterances[utt_idx].words)))

    words: list[SourceWord] = []
    while len(words) < length:
        utt_words = utterances[utt_idx].words
        take = min(length - len(words), len(utt_words) - word_idx)
        words.extend(utt_words[word_idx : word_idx + take])
        utt_idx = (utt_idx + 1) % len(utterances)
        word_idx = 0

    duration = float(sum(w.duration for w in words))
    state.speech_union += duration
    return SentencePlan(speaker_id=speaker_id, words=tuple(words), duration=duration)


def discrepancies(
    state: SessionState, silence_mean: float, overlap_mean: float
) -> tuple[float, float]:
    """How far the session currently sits from its target mean ratios.

    Returns (silence discrepancy, overlap discrepancy): current ratio minus
    the target mean, negative when the session is short of the target.  The
    loop passes the session's own sampled means, not the run-level ones:
    comparing against run-level means lets a session whose silence target
    drew low hold a permanently negative silence discrepancy, which starves
    the overlap branch and biases overlap ratios well below target (a
    measured 0.03 shortfall at a 0.075 target).  Callers must ensure
    running_length and speech_union are positive; the loop's first
    iteration substitutes the just-built sentence duration for
    running_length.
    """
    ds = state.silence_total / state.running_length - silence_mean
    do = state.overlap_total / state.speech_union - overlap_mean
    return ds, do


def required_silence(state: SessionState, target_mean: float) -> tuple[float, bool]:
    """Silence gap that would bring the session silence ratio to target_mean.

    Solves (gap + silence_total) / (gap + running_length) == target_mean.
    Returns (gap_seconds, saturated); when the session is already over-silent
    the closed form goes negative and is clamped to zero with saturated=True.
    """
    need = (state.silence_total - target_mean * state.running_length) / (target_mean - 1.0)
    if need < 0.0:
        return 0.0, True
    return need, False


def required_overlap(state: SessionState, target_mean: float) -> tuple[float, bool]:
    """Overlap that would bring the session overlap ratio to target_mean.

    Solves (ovl + overlap_total) / (speech_union - ovl) == target_mean, with
    speech_union already including the sentence about to be placed.  Returns
    (overlap_seconds, saturated) with the same clamping rule as
    required_silence.
    """
    need = (target_mean * state.speech_union - state.overlap_total) / (target_mean + 1.0)
    if need < 0.0:
        return 0.0, True
    return need, False


def add_sentence(
    state: SessionState, plan: SentencePlan, silence_gap: float, overlap: float
) -> PlacedSentence:
    """Place a built sentence after a silence gap or overlapping its predecessor.

    Exactly one of silence_gap/overlap may be nonzero (both zero places the
    sentence back to back).  The overlap is clamped to OVERLAP_CAP times the
    shorter of the two sentences involved.  Updates all accumulators and
    restores running_length == speech_union + silence_total.
    """
    if silence_gap < 0.0 or overlap < 0.0:
        raise RuntimeError(f"negative placement gap: silence={silence_gap}, overlap={overlap}")
    if silence_gap > 0.0 and overlap > 0.0:
        raise RuntimeError("a sentence cannot both follow silence and overlap its predecessor")
    if overlap > 0.0 and not state.placed:
        raise RuntimeError("cannot overlap: no previous sentence")

    effective_overlap = overlap
    if overlap > 0.0:
        prev = state.placed[-1]
        effective_overlap = min(overlap, OVERLAP_CAP * prev.duration, OVERLAP_CAP * plan.duration)

    onset = state.running_length + silence_gap - effective_overlap
    word_onsets = []
    cursor = onset
    for word in plan.words:
        word_onsets.append((word, cursor))
        cursor += word.duration

    placed = PlacedSentence(
        speaker_id=plan.speaker_id,
        onset=onset,
        duration=plan.duration,
        words=tuple(word_onsets),
        preceding_silence=silence_gap,
        overlap_with_previous=effective_overlap,
    )
    state.silence_total += silence_gap
    state.overlap_total += effective_overlap
    state.speech_union -= effective_overlap
    state.running_length = state.speech_union + state.silence_total
    state.placed.append(placed)
    return placed


def simulate_session(
    cfg: SimulationConfig, corpus: SourceCorpus, session_index: int
) -> tuple[SessionTimeline, SessionAnnotation]:
    """Run the sampling loop for one session.

    Returns the placed-sentence timeline plus its ground-truth annotation.
    Fully deterministic in (cfg.base_seed, session_index): re-running
    regenerates the identical session regardless of worker scheduling.

    The first sentence always takes the silence branch (there is nothing to
    overlap) and evaluates its accounting against the just-built sentence
    duration, since no time has been placed yet.  Overlap is only allowed
    when the turn actually changed: a speaker cannot overlap themselves, so
    those iterations are redirected to the silence branch.  When a branch's
    required amount clamps to zero (target already exceeded), the Gamma step
    is skipped and the sentence is placed back to back.

    Sampled gaps and overlaps are snapped to the millisecond grid before
    placement (overlaps floored after the cap so the cap still holds).
    Annotation files print milliseconds, so with whole-millisecond source
    words every boundary lands exactly on the written grid; otherwise each
    boundary would round independently and the recomputed silence/overlap
    totals would random-walk away from the accumulators by several
    milliseconds per session.  The snap moves each placement by at most
    half a millisecond, which is far below the ratio tolerances.
    """
    params = sample_session_params(cfg, corpus, session_index)
    rng = params.rng
    state = SessionState()

    while state.running_length < cfg.session_length:
        previous = state.current_speaker
        speaker = next_speaker(params, cfg.turn_prob, previous, rng)
        state.current_speaker = speaker
        turn_changed = previous < 0 or speaker != previous

        length = sample_sentence_length(cfg.sentence_params, rng)
        plan = build_sentence(corpus, state, length, params.speaker_ids[speaker], rng)

        if not state.placed:
            # speech_union == the sentence just built; silence_total == 0
            view = replace_running_length(state, state.speech_union)
            take_silence = True
        else:
            view = state
            ds, do = discrepancies(
                state, params.silence_target_mean, params.overlap_target_mean
            )
            take_silence = ds <= do or not turn_changed

        if take_silence:
            need, saturated = required_silence(view, params.silence_target_mean)
            gap = 0.0
            if not saturated and need > 0.0:
                gap = sample_gap(gamma_params_for_gap(need, cfg.silence_moments.variance), rng)
                gap = round(gap * 1000.0) / 1000.0
            add_sentence(state, plan, gap, 0.0)
        else:
            need, saturated = required_overlap(state, params.overlap_target_mean)
            ovl = 0.0
            if not saturated and need > 0.0:
                ovl = sample_gap(gamma_params_for_gap(need, cfg.overlap_moments.variance), rng)
                # Floor after clamping so the snapped value never exceeds the cap.
                cap = OVERLAP_CAP * min(state.placed[-1].duration, plan.duration)
                ovl = math.floor(min(ovl, cap) * 1000.0 + 1e-9) / 1000.0
            add_sentence(state, plan, 0.0, ovl)

    timeline = SessionTimeline(
        placed=tuple(state.placed),
        session_length=state.running_length,
        sample_rate=corpus.sample_rate,
        gains={sid: float(g) for sid, g in zip(params.speaker_ids, params.gains)},
    )
    return timeline, build_annotation(timeline, params, state)


def replace_running_length(state: SessionState, running_length: float) -> SessionState:
    """A read-only view of the state with a substituted running length."""
    return SessionState(
        running_length=running_length,
        silence_total=state.silence_total,
        speech_union=state.speech_union,
        overlap_total=state.overlap_total,
        current_speaker=state.current_speaker,
        placed=state.placed,
    )


def build_annotation(
    timeline: SessionTimeline, params: SessionParams, state: SessionState
) -> SessionAnnotation:
    """Flatten a finished session into its ground-truth annotation."""
    segments = [(p.speaker_id, p.onset, p.duration) for p in timeline.placed]
    words = [
        (p.speaker_id, w.text, onset, w.duration)
        for p in timeline.placed
        for w, onset in p.words
    ]
    silence_ratio = state.silence_total / state.running_length if state.running_length > 0 else 0.0
    overlap_ratio = state.overlap_total / state.speech_union if state.speech_union > 0 else 0.0
    return SessionAnnotation(
        session_id=f"session_{params.session_index:04d}",
        segments=segments,
        words=words,
        actual_length=state.running_length,
        silence_ratio=silence_ratio,
        overlap_ratio=overlap_ratio,
        silence_target_mean=params.silence_target_mean,
        overlap_target_mean=params.overlap_target_mean,
        base_seed=params.base_seed,
        session_index=params.session_index,
    )


__all__ = [
    "OVERLAP_CAP",
    "PlacedSentence",
    "SentencePlan",
    "SessionParams",
    "SessionState",
    "SessionTimeline",
    "SimulationConfig",
    "add_sentence",
    "build_sentence",
    "discrepancies",
    "next_speaker",
    "required_overlap",
    "required_silence",
    "sample_session_params",
    "simulate_session",
]
