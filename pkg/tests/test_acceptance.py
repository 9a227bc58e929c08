"""End-to-end statistical acceptance checks.

Each test prints one PASS/FAIL line with the measured numbers (run with
``pytest -s`` to see them on success) and asserts the same condition, so a
red line always comes with the values that broke it.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
import scipy.stats

from conftest import make_config
from convosim.analyzer import parse_rttm, session_ratios, session_times
from convosim.annotate import write_rttm
from convosim.cli import generate_sessions, load_run_config
from convosim.engine import (
    SessionState,
    required_overlap,
    required_silence,
    simulate_session,
)
from convosim.sampler import (
    GammaParams,
    NegBinomialParams,
    RatioMoments,
    beta_from_moments,
    derive_session_rng,
    sample_gap,
    sample_negative_binomial,
    sample_session_mean,
)


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def _se_of_mean(var: float, n: int) -> float:
    return float(np.sqrt(var / n))


def _se_of_variance(var: float, excess_kurtosis: float, n: int) -> float:
    mu4 = var * var * (excess_kurtosis + 3.0)
    return float(np.sqrt((mu4 - var * var * (n - 3) / (n - 1)) / n))


def _run_point(corpus, silence, overlap, tmp_path, label):
    cfg = make_config(
        session_length=600.0,
        num_speakers=4,
        turn_prob=0.9,
        silence_moments=silence,
        overlap_moments=overlap,
        base_seed=101,
    )
    sil_ratios = []
    ovl_ratios = []
    for idx in range(100):
        _, ann = simulate_session(cfg, corpus, idx)
        path = write_rttm(ann, tmp_path / f"{label}_{idx}.rttm")
        segments = parse_rttm(path)
        s, o = session_ratios(segments, ann.actual_length)
        sil_ratios.append(s)
        ovl_ratios.append(o)
    return np.asarray(sil_ratios), np.asarray(ovl_ratios)


def _check_point(corpus, tmp_path, label, silence, overlap):
    sil, ovl = _run_point(corpus, silence, overlap, tmp_path, label)
    checks = [
        ("sil mean", abs(sil.mean() - silence.mean) <= 0.03,
         f"{sil.mean():.4f} vs {silence.mean} (tol 0.03)"),
        ("ovl mean", abs(ovl.mean() - overlap.mean) <= 0.02,
         f"{ovl.mean():.4f} vs {overlap.mean} (tol 0.02)"),
        ("sil var", silence.variance / 2.5 <= sil.var() <= silence.variance * 2.5,
         f"{sil.var():.4f} vs {silence.variance} (factor 2.5)"),
        ("ovl var", overlap.variance / 2.5 <= ovl.var() <= overlap.variance * 2.5,
         f"{ovl.var():.4f} vs {overlap.variance} (factor 2.5)"),
    ]
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name} {msg}" for name, _ok, msg in checks)
    return ok, detail


def test_criterion_1_distribution_match(full_corpus, tmp_path):
    """100 sessions of 600 s per parameter point, measured from written RTTMs."""
    started = time.monotonic()
    ok_a, detail_a = _check_point(
        full_corpus, tmp_path, "a",
        RatioMoments(0.1473, 0.0061), RatioMoments(0.0754, 0.0020),
    )
    ok_b, detail_b = _check_point(
        full_corpus, tmp_path, "b",
        RatioMoments(0.1814, 0.0081), RatioMoments(0.1473, 0.0047),
    )
    elapsed = time.monotonic() - started
    _verdict("criterion 1a (meeting point 1)", ok_a, detail_a)
    _verdict("criterion 1b (meeting point 2)", ok_b, detail_b)
    _verdict(
        "criterion 1 runtime", elapsed < 300.0, f"{elapsed:.1f} s for both points (limit 300 s)"
    )


def test_criterion_2_moment_fit_round_trip():
    """1000 feasible (mean, variance) pairs recover through the Beta fit."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        mean = float(rng.uniform(0.01, 0.99))
        bound = mean * (1.0 - mean)
        variance = float(rng.uniform(1e-6, 0.999) * bound)
        params = beta_from_moments(RatioMoments(mean=mean, variance=variance))
        worst = max(
            worst,
            abs(params.mean - mean) / mean,
            abs(params.variance - variance) / variance,
        )
    _verdict(
        "criterion 2", worst <= 1e-12, f"worst relative moment error {worst:.3e} (tol 1e-12)"
    )


def test_criterion_3_gap_substitution():
    """1000 random non-saturated states: the closed-form gap hits the target."""
    rng = np.random.default_rng(333)
    worst = 0.0
    for _ in range(1000):
        target_s = float(rng.uniform(0.05, 0.5))
        running = float(rng.uniform(1.0, 1000.0))
        silence = float(rng.uniform(0.0, 0.95 * target_s * running))
        state = SessionState(
            running_length=running, silence_total=silence, speech_union=running - silence
        )
        need, saturated = required_silence(state, target_s)
        assert not saturated
        achieved = (silence + need) / (running + need)
        worst = max(worst, abs(achieved - target_s))

        target_o = float(rng.uniform(0.01, 0.3))
        union = float(rng.uniform(1.0, 1000.0))
        overlap = float(rng.uniform(0.0, 0.95 * target_o * union))
        state = SessionState(
            running_length=union, silence_total=0.0, speech_union=union, overlap_total=overlap
        )
        need, saturated = required_overlap(state, target_o)
        assert not saturated
        achieved = (overlap + need) / (union - need)
        worst = max(worst, abs(achieved - target_o))
    _verdict("criterion 3", worst <= 1e-9, f"worst target miss {worst:.3e} (tol 1e-9)")


def test_criterion_4_annotation_round_trip(small_corpus, tmp_path):
    """200 sessions: quantities re-measured from RTTM stay within 2 ms."""
    cfg = make_config(session_length=120.0, base_seed=44)
    worst = 0.0
    for idx in range(200):
        _, ann = simulate_session(cfg, small_corpus, idx)
        path = write_rttm(ann, tmp_path / f"s{idx}.rttm")
        segments = parse_rttm(path)
        silence, overlap, union = session_times(segments, ann.actual_length)
        silence_exact = ann.silence_ratio * ann.actual_length
        union_exact = ann.actual_length - silence_exact
        overlap_exact = ann.overlap_ratio * union_exact
        worst = max(
            worst,
            abs(silence - silence_exact),
            abs(overlap - overlap_exact),
            abs(union - union_exact),
        )
    _verdict("criterion 4", worst <= 2e-3, f"worst quantity error {worst:.2e} s (tol 2e-3 s)")


def test_criterion_5_sampler_moments():
    """1e5 draws per distribution land within 3 standard errors."""
    n = 100_000
    rng = derive_session_rng(55, 0)
    failures = []

    beta = beta_from_moments(RatioMoments(0.1473, 0.0061))
    draws = np.array([sample_session_mean(beta, rng) for _ in range(n)])
    _, var, _, kurt = scipy.stats.beta.stats(beta.alpha, beta.beta, moments="mvsk")
    if abs(draws.mean() - beta.mean) > 3 * _se_of_mean(float(var), n):
        failures.append(f"beta mean {draws.mean():.5f} vs {beta.mean:.5f}")
    if abs(draws.var() - beta.variance) > 3 * _se_of_variance(float(var), float(kurt), n):
        failures.append(f"beta var {draws.var():.6f} vs {beta.variance:.6f}")

    gamma = GammaParams(shape=2.5, scale=0.4)
    draws = np.array([sample_gap(gamma, rng) for _ in range(n)])
    g_var = gamma.shape * gamma.scale**2
    if abs(draws.mean() - gamma.mean) > 3 * _se_of_mean(g_var, n):
        failures.append(f"gamma mean {draws.mean():.5f} vs {gamma.mean:.5f}")
    if abs(draws.var() - g_var) > 3 * _se_of_variance(g_var, 6.0 / gamma.shape, n):
        failures.append(f"gamma var {draws.var():.5f} vs {g_var:.5f}")

    nb = NegBinomialParams(k=2.0, p=0.4)
    draws = np.array([sample_negative_binomial(nb, rng) for _ in range(n)])
    nb_mean, nb_var, _, nb_kurt = scipy.stats.nbinom.stats(nb.k, nb.p, moments="mvsk")
    if abs(draws.mean() - float(nb_mean)) > 3 * _se_of_mean(float(nb_var), n):
        failures.append(f"nb mean {draws.mean():.4f} vs {float(nb_mean):.4f}")
    if abs(draws.var() - float(nb_var)) > 3 * _se_of_variance(float(nb_var), float(nb_kurt), n):
        failures.append(f"nb var {draws.var():.4f} vs {float(nb_var):.4f}")

    # Unit-shape gamma must match the exponential law.
    theta = 0.7
    unit = GammaParams(shape=1.0, scale=theta)
    draws = np.array([sample_gap(unit, rng) for _ in range(n)])
    for probe in (0.5 * theta, theta, 2.0 * theta):
        empirical = float(np.mean(draws <= probe))
        expected = 1.0 - np.exp(-probe / theta)
        if abs(empirical - expected) > 0.01:
            failures.append(f"gamma(k=1) CDF at {probe:.2f}: {empirical:.4f} vs {expected:.4f}")

    _verdict(
        "criterion 5",
        not failures,
        "all moments within 3 SE and unit-shape CDF within 0.01"
        if not failures
        else "; ".join(failures),
    )


def _tree_bytes(root):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_criterion_6_worker_count_invariance(small_corpus_dir, tmp_path):
    """16 rendered sessions are byte-identical for 1 and 8 workers."""
    import yaml

    raw = {
        "corpus_manifest": str(small_corpus_dir / "manifest.jsonl"),
        "session_length": 30.0,
        "num_sessions": 16,
        "num_speakers": 4,
        "turn_prob": 0.9,
        "silence_mean": 0.1473,
        "silence_var": 0.0061,
        "overlap_mean": 0.0754,
        "overlap_var": 0.0020,
        "sentence_kw": 2.0,
        "sentence_pw": 0.4,
        "dominance_var": 0.04,
        "volume_range": [0.7, 1.0],
        "seed": 66,
    }
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text(yaml.safe_dump(raw))
    run_cfg = load_run_config(cfg_path)

    report1 = generate_sessions(run_cfg, tmp_path / "serial", workers=1)
    report8 = generate_sessions(run_cfg, tmp_path / "parallel", workers=8)
    assert report1.sessions_generated == report8.sessions_generated == 16
    same = _tree_bytes(tmp_path / "serial") == _tree_bytes(tmp_path / "parallel")
    _verdict("criterion 6", same, "1-worker and 8-worker outputs byte-identical over 16 sessions")


def test_criterion_7_edge_cases(small_corpus):
    """Degenerate settings behave exactly, and the loop always terminates."""
    failures = []

    cfg = make_config(turn_prob=0.0, session_length=60.0)
    for idx in range(5):
        _, ann = simulate_session(cfg, small_corpus, idx)
        if ann.overlap_ratio != 0.0:
            failures.append(f"turn_prob=0 session {idx} overlap {ann.overlap_ratio}")

    cfg = make_config(num_speakers=1, session_length=60.0)
    for idx in range(5):
        _, ann = simulate_session(cfg, small_corpus, idx)
        if ann.overlap_ratio != 0.0:
            failures.append(f"single-speaker session {idx} overlap {ann.overlap_ratio}")

    cfg = make_config(
        silence_moments=RatioMoments(0.005, 1e-5), session_length=120.0
    )
    ratios = [simulate_session(cfg, small_corpus, idx)[1].silence_ratio for idx in range(30)]
    if np.mean(ratios) >= 0.02:
        failures.append(f"near-zero silence target gives mean ratio {np.mean(ratios):.4f}")

    # Long sentences against a short session: must still terminate cleanly.
    cfg = make_config(
        session_length=10.0, sentence_params=NegBinomialParams(k=20.0, p=0.1)
    )
    timeline, _ = simulate_session(cfg, small_corpus, 0)
    if not timeline.placed or timeline.placed[-1].end < 10.0:
        failures.append("short session with long sentences did not terminate past target")

    _verdict(
        "criterion 7",
        not failures,
        "zero-overlap modes exact, near-zero silence < 0.02, termination holds"
        if not failures
        else "; ".join(failures),
    )


def test_criterion_8_downstream_training_benchmarks():
    """Training VAD/diarization models on external data is out of scope here."""
    print(
        "criterion 8: SKIP (needs external speech corpora and model training; "
        "statistical fidelity is covered by criteria 1-7)"
    )
    pytest.skip(
        "downstream VAD/diarization model training needs external corpora and "
        "GPU-scale compute; the simulator-side guarantees it depends on are "
        "checked by criteria 1-7"
    )
