"""Distribution machinery for session simulation.

Four distributions drive the simulator: a Beta distribution for per-session
silence/overlap mean ratios (fitted from target moments by the method of
moments), a negative binomial for word-level sentence lengths, a Gamma for
silence/overlap gap durations, and uniform/normal draws for turn-taking and
speaker traits.  Everything draws from an explicit seeded generator so that
sessions are reproducible and independently streamable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# One session stream per (base_seed, session_index); Philox is counter-based,
# so streams never share state and parallel workers cannot perturb each other.
SeededRng = np.random.Generator

# Lanes keep the simulation loop's draws and the audio-rendering draws on
# independent streams, so skipping the render (stats-only runs, resume)
# cannot shift any other draw.
SIMULATION_LANE = 0
RENDER_LANE = 1


@dataclass(frozen=True)
class RatioMoments:
    """Target mean/variance of a ratio constrained to (0, 1)."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not 0.0 < self.mean < 1.0:
            raise ValueError(f"ratio mean must be in (0, 1), got {self.mean}")
        bound = self.mean * (1.0 - self.mean)
        if not 0.0 < self.variance < bound:
            raise ValueError(
                f"ratio variance must satisfy 0 < variance < mean*(1-mean) "
                f"= {bound:.6g}, got {self.variance}"
            )


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError(f"beta params must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> float:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


@dataclass(frozen=True)
class GammaParams:
    """Shape/scale of a Gamma whose mean is shape*scale seconds."""

    shape: float
    scale: float

    def __post_init__(self) -> None:
        if self.shape <= 0.0 or self.scale <= 0.0:
            raise ValueError(f"gamma params must be positive, got ({self.shape}, {self.scale})")

    @property
    def mean(self) -> float:
        return self.shape * self.scale


@dataclass(frozen=True)
class NegBinomialParams:
    """Dispersion and success probability of the sentence-length model."""

    k: float
    p: float

    def __post_init__(self) -> None:
        if self.k <= 0.0:
            raise ValueError(f"dispersion k must be positive, got {self.k}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"probability p must be in (0, 1], got {self.p}")


def beta_from_moments(moments: RatioMoments) -> BetaParams:
    """Fit Beta(alpha, beta) to a target mean/variance by the method of moments.

    alpha = mean^2 * (1 - mean) / variance - mean
    beta  = mean * (1 - mean)^2 / variance - (1 - mean)

    Feasibility (0 < variance < mean*(1-mean)) is enforced by RatioMoments;
    inside that region both parameters come out strictly positive.
    """
    m, v = moments.mean, moments.variance
    alpha = m * m * (1.0 - m) / v - m
    beta = m * (1.0 - m) ** 2 / v - (1.0 - m)
    return BetaParams(alpha=alpha, beta=beta)


def sample_session_mean(params: BetaParams, rng: SeededRng) -> float:
    """Draw one session-level mean ratio from the fitted Beta distribution.

    The draw is nudged inside the open interval (0, 1): downstream closed
    forms divide by (1 - ratio) and ratio, so the endpoints are unusable.
    """
    return float(np.clip(rng.beta(params.alpha, params.beta), 1e-12, 1.0 - 1e-12))


def sample_negative_binomial(params: NegBinomialParams, rng: SeededRng) -> int:
    """Draw a raw negative-binomial count via the Gamma-Poisson mixture.

    The mixture form supports non-integer dispersion k.  With p == 1 the
    Gamma scale collapses to zero and the draw is always 0.
    """
    scale = (1.0 - params.p) / params.p
    lam = rng.gamma(params.k, scale) if scale > 0.0 else 0.0
    return int(rng.poisson(lam))


def sample_sentence_length(params: NegBinomialParams, rng: SeededRng) -> int:
    """Draw a sentence length in words, clamped to at least one word.

    The negative binomial has mass at zero; an empty sentence is useless to
    the simulator, so zero draws are promoted to a single word.
    """
    return max(1, sample_negative_binomial(params, rng))


def gamma_params_for_gap(target_mean: float, variance: float) -> GammaParams:
    """Fit Gamma shape/scale so the gap distribution has the given moments.

    shape = mean^2 / variance, scale = variance / mean.  A non-positive target
    mean has no Gamma fit; callers treat that as a degenerate (zero) gap.
    """
    if target_mean <= 0.0:
        raise ValueError(f"degenerate gap: target mean must be positive, got {target_mean}")
    if variance <= 0.0:
        raise ValueError(f"gap variance must be positive, got {variance}")
    return GammaParams(shape=target_mean * target_mean / variance, scale=variance / target_mean)


def sample_gap(params: GammaParams, rng: SeededRng) -> float:
    """Draw a nonnegative gap duration in seconds."""
    return float(rng.gamma(params.shape, params.scale))


def derive_session_rng(base_seed: int, session_index: int, lane: int = SIMULATION_LANE) -> SeededRng:
    """Derive the independent, reproducible random stream for one session.

    The (base_seed, session_index, lane) triple is hashed through numpy's
    SeedSequence (splitmix-style mixing) into a Philox counter-based
    generator, so identical inputs give identical streams regardless of
    platform, worker count, or scheduling order.
    """
    if base_seed < 0 or session_index < 0 or lane < 0:
        raise ValueError("base_seed, session_index, and lane must be nonnegative")
    seq = np.random.SeedSequence([base_seed, session_index, lane])
    return np.random.Generator(np.random.Philox(seq))
