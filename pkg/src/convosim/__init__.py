"""Multi-speaker speech session simulator with exact ground-truth annotations.

Sessions are assembled sentence by sentence from a word-aligned source
corpus.  An online feedback loop compares the session's realized silence and
overlap ratios against sampled per-session targets and sizes every gap or
overlap to close the difference, so a generated dataset reproduces the
silence/overlap statistics it was asked for.  Each session comes with
sample-accurate RTTM, CTM, and frame-level VAD annotations.
"""

from .analyzer import (
    DatasetStats,
    RttmParseError,
    aggregate_stats,
    histogram,
    parse_rttm,
    session_ratios,
    session_times,
)
from .annotate import (
    SessionAnnotation,
    read_run_manifest,
    vad_frame_labels,
    write_ctm,
    write_manifest,
    write_rttm,
    write_vad_labels,
)
from .corpus import ManifestError, SourceCorpus, load_corpus
from .engine import (
    SessionTimeline,
    SimulationConfig,
    simulate_session,
)
from .mixer import (
    AugmentationConfig,
    ClippingError,
    RenderResult,
    measure_snr,
    render_session,
    write_wav,
)
from .sampler import (
    BetaParams,
    GammaParams,
    NegBinomialParams,
    RatioMoments,
    beta_from_moments,
    derive_session_rng,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig",
    "BetaParams",
    "ClippingError",
    "DatasetStats",
    "GammaParams",
    "ManifestError",
    "NegBinomialParams",
    "RatioMoments",
    "RenderResult",
    "RttmParseError",
    "SessionAnnotation",
    "SessionTimeline",
    "SimulationConfig",
    "SourceCorpus",
    "aggregate_stats",
    "beta_from_moments",
    "derive_session_rng",
    "histogram",
    "load_corpus",
    "measure_snr",
    "parse_rttm",
    "read_run_manifest",
    "render_session",
    "session_ratios",
    "session_times",
    "simulate_session",
    "vad_frame_labels",
    "write_ctm",
    "write_manifest",
    "write_rttm",
    "write_vad_labels",
    "write_wav",
    "__version__",
]
