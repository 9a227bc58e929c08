"""Command-line front end: simulate, analyze, compare.

simulate reads a YAML config, generates sessions across a worker pool, and
writes audio plus annotations.  analyze recovers silence/overlap statistics
from RTTM files and prints simulator-ready parameters.  compare lays two
stats files side by side with overlay histograms.

Exit codes: 0 success, 1 usage or config error, 2 partial failure (some
sessions failed or some inputs were skipped).

All randomness is derived inside the workers from (seed, session_index);
the CLI itself never draws random numbers, which is what makes runs
reproducible regardless of worker count.
"""

from __future__ import annotations

import argparse
import csv
import logging
import multiprocessing
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import yaml

from .analyzer import (
    DatasetStats,
    RttmParseError,
    aggregate_stats,
    histogram_rows,
    parse_rttm,
    session_ratios,
)
from .annotate import (
    SessionAnnotation,
    manifest_record,
    read_run_manifest,
    rttm_text,
    write_ctm,
    write_manifest,
    write_rttm,
    write_vad_labels,
)
from .corpus import SourceCorpus, load_corpus
from .engine import SimulationConfig, simulate_session
from .mixer import AugmentationConfig, render_session, write_wav
from .sampler import RENDER_LANE, NegBinomialParams, RatioMoments, derive_session_rng

logger = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "corpus_manifest",
    "session_length",
    "num_sessions",
    "num_speakers",
    "turn_prob",
    "silence_mean",
    "silence_var",
    "overlap_mean",
    "overlap_var",
    "sentence_kw",
    "sentence_pw",
    "dominance_var",
    "volume_range",
    "seed",
    "min_word_duration",
    "max_word_duration",
    "vad_frame_length",
    "render_audio",
    "normalize_on_clip",
    "merge_same_speaker_rttm",
    "augmentation",
}
_AUG_KEYS = {"gain_perturb_db_range", "noise_manifest", "snr_db_range"}
_STATS_COLUMNS = ["session_id", "silence_ratio", "overlap_ratio"]


class ConfigError(ValueError):
    """A run config is missing, malformed, or has bad field values."""


@dataclass(frozen=True)
class RunConfig:
    """Everything `simulate` needs: engine config plus I/O options."""

    simulation: SimulationConfig
    corpus_manifest: Path
    augmentation: AugmentationConfig
    min_word_duration: float = 0.2
    max_word_duration: float = 0.8
    vad_frame_length: float = 0.02
    render_audio: bool = True
    normalize_on_clip: bool = True
    merge_same_speaker_rttm: bool = False


@dataclass
class RunReport:
    """What a simulate run did, printed at the end and returned to callers."""

    sessions_generated: int
    failures: list[tuple[int, str]]
    total_audio_seconds: float
    wall_seconds: float
    stats: DatasetStats | None
    silence_target: RatioMoments | None = None
    overlap_target: RatioMoments | None = None
    resumed: int = 0


def _require(raw: dict, key: str):
    if key not in raw:
        raise ConfigError(f"{key}: required field is missing")
    return raw[key]


def _as_float(raw: dict, key: str, default: float | None = None) -> float:
    value = raw.get(key, default) if default is not None else _require(raw, key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def _as_int(raw: dict, key: str, default: int | None = None) -> int:
    value = raw.get(key, default) if default is not None else _require(raw, key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return value


def _as_bool(raw: dict, key: str, default: bool) -> bool:
    value = raw.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    return value


def _as_pair(value, key: str) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(f"{key}: expected a [low, high] number pair, got {value!r}")
    return float(value[0]), float(value[1])


def load_run_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML run config.

    Unknown keys are rejected (they are usually typos that would otherwise
    silently fall back to defaults).  Relative paths are resolved against
    the config file's directory.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping of fields")

    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")

    base_dir = path.parent

    aug_raw = raw.get("augmentation") or {}
    if not isinstance(aug_raw, dict):
        raise ConfigError(f"augmentation: expected a mapping, got {aug_raw!r}")
    unknown = set(aug_raw) - _AUG_KEYS
    if unknown:
        raise ConfigError(f"unknown augmentation fields: {', '.join(sorted(unknown))}")
    gain_range = aug_raw.get("gain_perturb_db_range")
    if gain_range is not None:
        gain_range = _as_pair(gain_range, "augmentation.gain_perturb_db_range")
    snr_range = aug_raw.get("snr_db_range")
    if snr_range is not None:
        snr_range = _as_pair(snr_range, "augmentation.snr_db_range")
    noise_manifest = aug_raw.get("noise_manifest")
    if noise_manifest is not None:
        if not isinstance(noise_manifest, str):
            raise ConfigError(
                f"augmentation.noise_manifest: expected a path, got {noise_manifest!r}"
            )
        noise_manifest = str(base_dir / noise_manifest)

    corpus_manifest = _require(raw, "corpus_manifest")
    if not isinstance(corpus_manifest, str):
        raise ConfigError(f"corpus_manifest: expected a path, got {corpus_manifest!r}")

    try:
        simulation = SimulationConfig(
            session_length=_as_float(raw, "session_length"),
            num_sessions=_as_int(raw, "num_sessions"),
            num_speakers=_as_int(raw, "num_speakers"),
            turn_prob=_as_float(raw, "turn_prob"),
            silence_moments=RatioMoments(
                mean=_as_float(raw, "silence_mean"), variance=_as_float(raw, "silence_var")
            ),
            overlap_moments=RatioMoments(
                mean=_as_float(raw, "overlap_mean"), variance=_as_float(raw, "overlap_var")
            ),
            sentence_params=NegBinomialParams(
                k=_as_float(raw, "sentence_kw"), p=_as_float(raw, "sentence_pw")
            ),
            dominance_var=_as_float(raw, "dominance_var", 0.0),
            volume_range=_as_pair(raw.get("volume_range", [1.0, 1.0]), "volume_range"),
            base_seed=_as_int(raw, "seed", 0),
        )
        augmentation = AugmentationConfig(
            gain_perturb_db_range=gain_range,
            noise_manifest=noise_manifest,
            snr_db_range=snr_range,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        simulation=simulation,
        corpus_manifest=base_dir / corpus_manifest,
        augmentation=augmentation,
        min_word_duration=_as_float(raw, "min_word_duration", 0.2),
        max_word_duration=_as_float(raw, "max_word_duration", 0.8),
        vad_frame_length=_as_float(raw, "vad_frame_length", 0.02),
        render_audio=_as_bool(raw, "render_audio", True),
        normalize_on_clip=_as_bool(raw, "normalize_on_clip", True),
        merge_same_speaker_rttm=_as_bool(raw, "merge_same_speaker_rttm", False),
    )


@dataclass
class _SessionPaths:
    wav: Path
    rttm: Path
    ctm: Path
    vad: Path

    def relative_fields(self, out_dir: Path, rendered: bool) -> dict:
        def rel(p: Path) -> str:
            return str(p.relative_to(out_dir))

        return {
            "wav": rel(self.wav) if rendered else None,
            "rttm": rel(self.rttm),
            "ctm": rel(self.ctm),
            "vad": rel(self.vad),
        }


def _session_paths(out_dir: Path, session_id: str) -> _SessionPaths:
    return _SessionPaths(
        wav=out_dir / "wav" / f"{session_id}.wav",
        rttm=out_dir / "rttm" / f"{session_id}.rttm",
        ctm=out_dir / "ctm" / f"{session_id}.ctm",
        vad=out_dir / "vad" / f"{session_id}.vad",
    )


# Worker-process state, set once by the pool initializer so per-session jobs
# only carry an integer index.
_WORKER: dict = {}


def _init_worker(run_cfg: RunConfig, corpus: SourceCorpus, out_dir: Path, resume: bool) -> None:
    _WORKER["run_cfg"] = run_cfg
    _WORKER["corpus"] = corpus
    _WORKER["out_dir"] = out_dir
    _WORKER["resume"] = resume


def _outputs_match(ann: SessionAnnotation, paths: _SessionPaths, run_cfg: RunConfig) -> bool:
    """True when existing files can be trusted for this annotation."""
    expected = [paths.rttm, paths.ctm, paths.vad]
    if run_cfg.render_audio:
        expected.append(paths.wav)
    if not all(p.exists() for p in expected):
        return False
    fresh = rttm_text(ann, run_cfg.merge_same_speaker_rttm)
    try:
        return paths.rttm.read_text(encoding="utf-8") == fresh
    except OSError:
        return False


def _generate_one(index: int) -> tuple[int, dict | None, float, bool, str | None]:
    """Produce one session's files; returns (index, record, seconds, resumed, error)."""
    run_cfg: RunConfig = _WORKER["run_cfg"]
    corpus: SourceCorpus = _WORKER["corpus"]
    out_dir: Path = _WORKER["out_dir"]
    try:
        timeline, ann = simulate_session(run_cfg.simulation, corpus, index)
        paths = _session_paths(out_dir, ann.session_id)
        resumed = bool(_WORKER["resume"]) and _outputs_match(ann, paths, run_cfg)
        if not resumed:
            write_rttm(ann, paths.rttm, run_cfg.merge_same_speaker_rttm)
            write_ctm(ann, paths.ctm)
            write_vad_labels(ann, run_cfg.vad_frame_length, paths.vad)
            if run_cfg.render_audio:
                render_rng = derive_session_rng(
                    run_cfg.simulation.base_seed, index, RENDER_LANE
                )
                result = render_session(
                    timeline,
                    corpus,
                    run_cfg.augmentation,
                    render_rng,
                    normalize_on_clip=run_cfg.normalize_on_clip,
                )
                write_wav(paths.wav, result.samples, result.sample_rate)
        record = manifest_record(
            ann, **paths.relative_fields(out_dir, run_cfg.render_audio)
        )
        return index, record, ann.actual_length, resumed, None
    except Exception as exc:  # noqa: BLE001 - one bad session must not kill the run
        logger.exception("session %d failed", index)
        return index, None, 0.0, False, f"{type(exc).__name__}: {exc}"


def generate_sessions(
    run_cfg: RunConfig, out_dir: str | Path, workers: int = 1, resume: bool = False
) -> RunReport:
    """Generate every session of a run and write the manifest.

    Deterministic in the config seed: any worker count yields byte-identical
    outputs.  Individual session failures are recorded and do not stop the
    rest of the run.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    out_dir = Path(out_dir)
    for sub in ("wav", "rttm", "ctm", "vad"):
        if sub == "wav" and not run_cfg.render_audio:
            continue
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    corpus = load_corpus(
        run_cfg.corpus_manifest,
        min_word_duration=run_cfg.min_word_duration,
        max_word_duration=run_cfg.max_word_duration,
    )
    indices = list(range(run_cfg.simulation.num_sessions))
    started = time.monotonic()

    if workers == 1:
        _init_worker(run_cfg, corpus, out_dir, resume)
        results = [_generate_one(i) for i in indices]
    else:
        with multiprocessing.Pool(
            processes=workers,
            initializer=_init_worker,
            initargs=(run_cfg, corpus, out_dir, resume),
        ) as pool:
            results = pool.map(_generate_one, indices)

    records = []
    failures: list[tuple[int, str]] = []
    total_audio = 0.0
    resumed_count = 0
    for index, record, seconds, resumed, error in sorted(results):
        if error is not None:
            failures.append((index, error))
            continue
        records.append(record)
        total_audio += seconds
        resumed_count += int(resumed)

    write_manifest(records, out_dir / "manifest.jsonl")
    stats = None
    if records:
        stats = aggregate_stats([(r["silence_ratio"], r["overlap_ratio"]) for r in records])
    return RunReport(
        sessions_generated=len(records),
        failures=failures,
        total_audio_seconds=total_audio,
        wall_seconds=time.monotonic() - started,
        stats=stats,
        silence_target=run_cfg.simulation.silence_moments,
        overlap_target=run_cfg.simulation.overlap_moments,
        resumed=resumed_count,
    )


def _format_report(report: RunReport) -> str:
    lines = [
        f"sessions generated: {report.sessions_generated}"
        + (f" ({report.resumed} resumed)" if report.resumed else ""),
        f"total audio: {report.total_audio_seconds:.1f} s",
        f"wall time: {report.wall_seconds:.1f} s",
    ]
    stats = report.stats
    if stats is not None:
        def var(v: float | None) -> str:
            return "n/a" if v is None else f"{v:.4f}"

        lines.append("observed vs target:")
        lines.append(
            f"  silence mean {stats.silence_mean:.4f} vs {report.silence_target.mean:.4f}"
            f" | var {var(stats.silence_var)} vs {report.silence_target.variance:.4f}"
        )
        lines.append(
            f"  overlap mean {stats.overlap_mean:.4f} vs {report.overlap_target.mean:.4f}"
            f" | var {var(stats.overlap_var)} vs {report.overlap_target.variance:.4f}"
        )
    for index, message in report.failures:
        lines.append(f"FAILED session {index}: {message}")
    return "\n".join(lines)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        run_cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        report = generate_sessions(run_cfg, args.out, workers=args.workers, resume=args.resume)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(_format_report(report))
    return 2 if report.failures else 0


def _collect_rttm_inputs(input_path: Path) -> list[tuple[str, Path, float | None]]:
    """Resolve the analyze input to (session_id, rttm path, session length) triples.

    A directory is scanned for *.rttm files (session length unknown, so the
    last segment end is used); a run manifest supplies both the RTTM paths
    and the true session lengths.
    """
    if input_path.is_dir():
        files = sorted(input_path.rglob("*.rttm"))
        return [(p.stem, p, None) for p in files]
    records = read_run_manifest(input_path)
    base = input_path.parent
    return [
        (r["session_id"], base / r["rttm"], float(r["actual_length"])) for r in records
    ]


def analyze_rttms(input_path: str | Path) -> tuple[DatasetStats, list[dict], list[str]]:
    """Compute per-session and aggregate stats for an RTTM dir or run manifest.

    Returns (stats, per-session rows, warnings); unparseable files are
    skipped with a warning instead of failing the whole analysis.
    """
    triples = _collect_rttm_inputs(Path(input_path))
    if not triples:
        raise ValueError(f"no RTTM files found under {input_path}")
    rows = []
    warnings: list[str] = []
    for session_id, rttm_path, length in triples:
        try:
            segments = parse_rttm(rttm_path)
        except (OSError, RttmParseError) as exc:
            warnings.append(f"skipping {rttm_path}: {exc}")
            continue
        if length is None:
            if not segments:
                warnings.append(f"skipping {rttm_path}: empty and no session length known")
                continue
            length = max(onset + duration for _spk, onset, duration in segments)
        silence, overlap = session_ratios(segments, length)
        rows.append(
            {"session_id": session_id, "silence_ratio": silence, "overlap_ratio": overlap}
        )
    if not rows:
        raise ValueError("no parseable RTTM files")
    stats = aggregate_stats([(r["silence_ratio"], r["overlap_ratio"]) for r in rows])
    return stats, rows, warnings


def _write_stats_csv(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_STATS_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _format_params(stats: DatasetStats) -> str:
    """The four simulator parameters as paste-ready config lines."""
    lines = [f"# sessions analyzed: {stats.num_sessions}"]
    if stats.silence_var is None:
        lines.append("# variance needs >= 2 sessions; only means are shown")
        lines.append(f"silence_mean: {stats.silence_mean:.6f}")
        lines.append(f"overlap_mean: {stats.overlap_mean:.6f}")
        return "\n".join(lines)
    lines += [
        f"silence_mean: {stats.silence_mean:.6f}",
        f"silence_var: {stats.silence_var:.6f}",
        f"overlap_mean: {stats.overlap_mean:.6f}",
        f"overlap_var: {stats.overlap_var:.6f}",
    ]
    return "\n".join(lines)


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        stats, rows, warnings = analyze_rttms(args.input)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    if args.out is not None:
        _write_stats_csv(rows, Path(args.out))
    print(_format_params(stats))
    return 2 if warnings else 0


def _read_stats_csv(path: Path) -> list[tuple[float, float]]:
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != _STATS_COLUMNS:
                raise ValueError(
                    f"{path}: expected columns {_STATS_COLUMNS}, got {reader.fieldnames}"
                )
            return [
                (float(row["silence_ratio"]), float(row["overlap_ratio"])) for row in reader
            ]
    except OSError as exc:
        raise ValueError(f"cannot read stats file {path}: {exc}") from exc


def compare_stats(
    real_csv: str | Path, sim_csv: str | Path, bins: int, out_dir: str | Path
) -> str:
    """Build the comparison table and write overlay histogram CSVs.

    Returns the formatted table; histograms land in out_dir as
    silence_hist.csv and overlap_hist.csv with one count column per input.
    """
    real = _read_stats_csv(Path(real_csv))
    sim = _read_stats_csv(Path(sim_csv))
    if not real or not sim:
        raise ValueError("both stats files must contain at least one session")
    real_stats = aggregate_stats(real)
    sim_stats = aggregate_stats(sim)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, pick in (("silence", 0), ("overlap", 1)):
        rows = histogram_rows(
            [
                ("real", [r[pick] for r in real]),
                ("simulated", [r[pick] for r in sim]),
            ],
            bins,
        )
        with (out_dir / f"{name}_hist.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["bin_lo", "bin_hi", "real", "simulated"])
            writer.writeheader()
            writer.writerows(rows)

    def fmt(value: float | None) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    table = [
        ("metric", "real", "simulated", "delta"),
        (
            "silence mean",
            fmt(real_stats.silence_mean),
            fmt(sim_stats.silence_mean),
            fmt(sim_stats.silence_mean - real_stats.silence_mean),
        ),
        (
            "silence var",
            fmt(real_stats.silence_var),
            fmt(sim_stats.silence_var),
            fmt(
                None
                if real_stats.silence_var is None or sim_stats.silence_var is None
                else sim_stats.silence_var - real_stats.silence_var
            ),
        ),
        (
            "overlap mean",
            fmt(real_stats.overlap_mean),
            fmt(sim_stats.overlap_mean),
            fmt(sim_stats.overlap_mean - real_stats.overlap_mean),
        ),
        (
            "overlap var",
            fmt(real_stats.overlap_var),
            fmt(sim_stats.overlap_var),
            fmt(
                None
                if real_stats.overlap_var is None or sim_stats.overlap_var is None
                else sim_stats.overlap_var - real_stats.overlap_var
            ),
        ),
        ("sessions", str(real_stats.num_sessions), str(sim_stats.num_sessions), ""),
    ]
    widths = [max(len(row[i]) for row in table) for i in range(4)]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in table
    )


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        table = compare_stats(args.real, args.simulated, args.bins, args.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(table)
    return 0


class _Parser(argparse.ArgumentParser):
    # Usage problems are exit code 1 for this tool, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convosim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate sessions from a config")
    p_sim.add_argument("--config", required=True, help="YAML run config")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_sim.add_argument(
        "--resume",
        action="store_true",
        help="skip sessions whose outputs already exist and validate",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_ana = sub.add_parser("analyze", help="extract stats from RTTMs or a run manifest")
    p_ana.add_argument("input", help="directory of .rttm files or a run manifest.jsonl")
    p_ana.add_argument("--out", help="write per-session stats CSV here")
    p_ana.set_defaults(func=cmd_analyze)

    p_cmp = sub.add_parser("compare", help="compare two stats CSVs")
    p_cmp.add_argument("real", help="stats CSV of the reference dataset")
    p_cmp.add_argument("simulated", help="stats CSV of the simulated dataset")
    p_cmp.add_argument("--bins", type=int, default=20, help="histogram bin count")
    p_cmp.add_argument("--out", default=".", help="directory for histogram CSVs")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
