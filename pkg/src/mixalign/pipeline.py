"""End-to-end orchestration: manifest -> alignment rows -> cues -> reports.

Everything here is deterministic for a fixed config: per-track work is
farmed out to a thread pool but results are reduced in manifest order, so
worker count never changes any output byte.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as F
from .align import AlignmentResult, align_key_invariant, align_single
from .audio import decode_audio
from .cache import FeatureCache
from .cue import (DEFAULT_RUN_LENGTH, DEFAULT_TOLERANCES, CuePoints,
                  SegmentationReport, build_transitions, evaluate_segmentation,
                  extract_cues)
from .errors import MixAlignError, NoStableRun, SpanTooShort
from .features import BeatSyncFeatures
from .manifest import MixManifest
from .stats import (StatsReport, cue_agreement, signed_semitones,
                    tempo_adjustment, transition_length_histogram,
                    transposition_histogram)

log = logging.getLogger(__name__)

CUES_CSV_COLUMNS = ("mix_id", "track_id", "cue_in_sec", "cue_out_sec",
                    "cue_in_track_beat", "cue_out_track_beat", "match_rate",
                    "transposition_semitones")
ALIGNMENT_CSV_COLUMNS = ("mix_id", "track_id", "status", "matched", "match_rate",
                         "transposition_semitones", "transposition_signed",
                         "total_cost", "n_track_beats", "cue_in_sec", "cue_out_sec",
                         "cue_in_mix_beat", "cue_out_mix_beat", "tempo_diff_pct")


@dataclass(frozen=True)
class RunConfig:
    """Pipeline configuration; the defaults reproduce the reference setup:
    combined chroma+MFCC cost, key invariance on, 0.4 match threshold,
    32-beat cue runs and 15/30/60 s tolerance windows at 22050 Hz."""

    feature_mode: str = "chroma_mfcc"
    key_invariant: bool = True
    match_threshold: float = 0.4
    run_length: int = DEFAULT_RUN_LENGTH
    tolerances: tuple = DEFAULT_TOLERANCES
    sample_rate: int = 22050
    workers: int = 1
    cache_dir: str | None = None

    def param_signature(self) -> str:
        return (f"sr{self.sample_rate}-fft{F.FFT_SIZE}-hop{F.HOP}-mel{F.N_MELS}"
                f"-mfcc{F.N_MFCC}-cens{F.CENS_SMOOTH_FRAMES}-v1")

    def make_cache(self) -> FeatureCache | None:
        if self.cache_dir is None:
            return None
        return FeatureCache(self.cache_dir, self.param_signature())


@dataclass
class TrackRow:
    """Per-(mix, track) alignment outcome; never silently dropped."""

    mix_id: str
    track_id: str
    status: str = "ok"  # ok | missing_audio | error | no_stable_run
    detail: str = ""
    result: AlignmentResult | None = None
    cues: CuePoints | None = None
    matched: bool = False
    track_bpm: float | None = None
    tempo_diff_pct: float | None = None


@dataclass
class MixRunResult:
    manifest: MixManifest
    mix_features: BeatSyncFeatures
    rows: list = field(default_factory=list)

    def matched_cued_rows(self) -> list:
        rows = [r for r in self.rows if r.matched and r.cues is not None]
        return sorted(rows, key=lambda r: r.cues.cue_in_mix_beat)


def compute_features(path: Path, config: RunConfig,
                     cache: FeatureCache | None = None) -> BeatSyncFeatures:
    def compute():
        return F.extract_beatsync(decode_audio(path, config.sample_rate))
    if cache is None:
        return compute()
    return cache.get_or_compute(path, compute)


def _align_one(entry, mix_id: str, mix_feats: BeatSyncFeatures,
               config: RunConfig, cache: FeatureCache | None) -> TrackRow:
    row = TrackRow(mix_id=mix_id, track_id=entry.track_id)
    if entry.track_audio_path is None or not Path(entry.track_audio_path).exists():
        row.status = "missing_audio"
        return row
    try:
        track_feats = compute_features(entry.track_audio_path, config, cache)
        if config.key_invariant:
            result = align_key_invariant(track_feats, mix_feats, config.feature_mode)
        else:
            result = align_single(track_feats, mix_feats, config.feature_mode)
    except MixAlignError as exc:
        row.status = "error"
        row.detail = f"{type(exc).__name__}: {exc}"
        return row

    row.result = result
    row.matched = result.match_rate >= config.match_threshold
    # the autocorrelation estimate is far finer than the frame grid, so the
    # original-track side of the tempo comparison uses it directly
    row.track_bpm = track_feats.beat_grid.tempo_bpm
    try:
        row.cues = extract_cues(result.path, mix_feats.beat_grid,
                                run_length=config.run_length, track_id=entry.track_id)
    except NoStableRun:
        row.status = "no_stable_run"
        return row
    try:
        row.tempo_diff_pct = tempo_adjustment(row.track_bpm, mix_feats.beat_grid, row.cues)
    except SpanTooShort:
        row.tempo_diff_pct = None
    return row


def align_mix(manifest: MixManifest, config: RunConfig,
              cache: FeatureCache | None = None) -> MixRunResult:
    """Align every manifest entry into the mix; rows keep manifest order."""
    mix_feats = compute_features(manifest.mix_audio_path, config, cache)
    run = MixRunResult(manifest=manifest, mix_features=mix_feats)

    def task(entry):
        return _align_one(entry, manifest.mix_id, mix_feats, config, cache)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            run.rows = list(pool.map(task, manifest.entries))
    else:
        run.rows = [task(e) for e in manifest.entries]
    return run


def segmentation_report(run: MixRunResult, config: RunConfig) -> SegmentationReport:
    """Pair transitions between matched tracks with their annotations.

    Boundary i+1 of the matched subsequence annotates the transition into
    that track, matching the convention that annotators mark cue-ins.
    """
    rows = run.matched_cued_rows()
    matched_ids = {r.track_id for r in rows}
    ordered = [e for e in run.manifest.entries if e.track_id in matched_ids]
    boundaries = [e.boundary_seconds for e in ordered[1:]]
    cues = {r.track_id: r.cues for r in rows}
    ordered_cues = [cues[e.track_id] for e in ordered]
    transitions = build_transitions(ordered_cues, run.mix_features.beat_grid)
    return evaluate_segmentation(transitions, boundaries, config.tolerances,
                                 mix_beats=run.mix_features.beat_grid)


def collect_stats(runs: list) -> StatsReport:
    """Aggregate corpus statistics from per-mix alignment results."""
    report = StatsReport()
    results = []
    cue_sets: dict[str, list[CuePoints]] = {}
    all_transitions = []
    for run in runs:
        rows = run.matched_cued_rows()
        for r in rows:
            results.append(r.result)
            if r.tempo_diff_pct is not None:
                report.tempo_diffs_pct.append(r.tempo_diff_pct)
            cue_sets.setdefault(r.track_id, []).append(r.cues)
        all_transitions.extend(build_transitions([r.cues for r in rows],
                                                 run.mix_features.beat_grid))
    report.transposition_counts = transposition_histogram(results)
    report.transition_lengths = transition_length_histogram(all_transitions)
    report.agreement_distances_beats = cue_agreement(cue_sets)
    return report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def write_alignment_csv(run: MixRunResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ALIGNMENT_CSV_COLUMNS)
        for r in run.rows:
            res, cues = r.result, r.cues
            writer.writerow([
                r.mix_id, r.track_id, r.status, _fmt(r.matched),
                _fmt(res.match_rate if res else None),
                _fmt(res.transposition_semitones if res else None),
                _fmt(signed_semitones(res.transposition_semitones) if res else None),
                _fmt(res.total_cost if res else None),
                _fmt(res.path.steps[-1, 0] + 1 if res else None),
                _fmt(cues.cue_in_sec if cues else None),
                _fmt(cues.cue_out_sec if cues else None),
                _fmt(cues.cue_in_mix_beat if cues else None),
                _fmt(cues.cue_out_mix_beat if cues else None),
                _fmt(r.tempo_diff_pct),
            ])


def write_cues_csv(run: MixRunResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CUES_CSV_COLUMNS)
        for r in run.matched_cued_rows():
            writer.writerow([
                r.mix_id, r.track_id,
                _fmt(r.cues.cue_in_sec), _fmt(r.cues.cue_out_sec),
                r.cues.cue_in_track_beat, r.cues.cue_out_track_beat,
                _fmt(r.result.match_rate), r.result.transposition_semitones,
            ])


def write_path_csv(result: AlignmentResult, path: Path) -> None:
    """Alignment dump for plots: one (track_beat, mix_beat) row per step."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("track_beat", "mix_beat"))
        writer.writerows(result.path.steps.tolist())


def run_details(run: MixRunResult) -> dict:
    """JSON-able record of everything downstream stats need."""
    rows = []
    for r in run.rows:
        d = {
            "mix_id": r.mix_id,
            "track_id": r.track_id,
            "status": r.status,
            "matched": r.matched,
            "detail": r.detail,
            "tempo_diff_pct": r.tempo_diff_pct,
            "track_bpm": r.track_bpm,
        }
        if r.result is not None:
            d.update({
                "match_rate": r.result.match_rate,
                "transposition_semitones": r.result.transposition_semitones,
                "transposition_signed": signed_semitones(r.result.transposition_semitones),
                "total_cost": r.result.total_cost,
            })
        if r.cues is not None:
            d.update({
                "cue_in_sec": r.cues.cue_in_sec,
                "cue_out_sec": r.cues.cue_out_sec,
                "cue_in_mix_beat": r.cues.cue_in_mix_beat,
                "cue_out_mix_beat": r.cues.cue_out_mix_beat,
                "cue_in_track_beat": r.cues.cue_in_track_beat,
                "cue_out_track_beat": r.cues.cue_out_track_beat,
            })
        rows.append(d)
    return {
        "mix_id": run.manifest.mix_id,
        "genre": run.manifest.genre,
        "n_mix_beats": int(run.mix_features.beat_grid.n_intervals),
        "mix_tempo_bpm": run.mix_features.beat_grid.tempo_bpm,
        "tracks": rows,
    }


def write_json(obj: dict, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
