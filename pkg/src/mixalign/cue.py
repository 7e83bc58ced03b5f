"""Cue point extraction from warping paths and segmentation evaluation.

A cue-in is the first path point whose succeeding 32 steps are all
diagonal; a cue-out is the last point whose preceding 32 steps are all
diagonal. Adjacent cues form transitions, which are scored against
human-annotated boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .align import WarpingPath
from .errors import InvalidParams, LengthMismatch, NoStableRun
from .features import BeatGrid

DEFAULT_RUN_LENGTH = 32
DEFAULT_TOLERANCES = (15.0, 30.0, 60.0)
CUE_TYPES = ("cue_out", "cue_in", "cue_mid")


@dataclass(frozen=True)
class CuePoints:
    track_id: str
    cue_in_mix_beat: int
    cue_out_mix_beat: int
    cue_in_track_beat: int
    cue_out_track_beat: int
    cue_in_sec: float
    cue_out_sec: float

    def __post_init__(self):
        if self.cue_in_mix_beat > self.cue_out_mix_beat:
            raise InvalidParams("cue-in must not come after cue-out")


@dataclass(frozen=True)
class TransitionRecord:
    prev_track_id: str
    next_track_id: str
    cue_out_sec: float
    cue_in_sec: float
    cue_mid_sec: float
    length_beats: int
    length_sec: float
    cue_out_mix_beat: int
    cue_in_mix_beat: int
    cue_mid_beat: int
    overlapping: bool  # True when the next cue-in precedes the previous cue-out


@dataclass
class SegmentationReport:
    rows: list[dict] = field(default_factory=list)
    median_abs_diff: dict = field(default_factory=dict)
    cue_best_median: float | None = None
    hit_rates: dict = field(default_factory=dict)
    closest_counts: dict = field(default_factory=dict)
    tolerances: tuple = DEFAULT_TOLERANCES

    @property
    def n_transitions(self) -> int:
        return len(self.rows)

    def to_json_dict(self) -> dict:
        return {
            "n_transitions": self.n_transitions,
            "rows": self.rows,
            "median_abs_diff_sec": self.median_abs_diff,
            "cue_best_median_sec": self.cue_best_median,
            "cue_in_hit_rates": {str(t): r for t, r in self.hit_rates.items()},
            "closest_cue_type_counts": self.closest_counts,
            "tolerances_sec": list(self.tolerances),
        }


def extract_cues(path: WarpingPath, mix_beats: BeatGrid,
                 run_length: int = DEFAULT_RUN_LENGTH, track_id: str = "") -> CuePoints:
    """Locate cue-in/cue-out on a warping path via strict diagonal runs.

    Raises NoStableRun when no run of run_length consecutive diagonal steps
    exists; such alignments should already have been filtered by match rate.
    """
    if run_length < 1:
        raise InvalidParams("run_length must be >= 1")
    diag = path.diagonal_mask.astype(np.int64)
    n_steps = len(diag)
    if n_steps < run_length:
        raise NoStableRun(f"path has {n_steps} steps < run length {run_length}")

    window = np.convolve(diag, np.ones(run_length, dtype=np.int64), mode="valid")
    full = np.flatnonzero(window == run_length)
    if len(full) == 0:
        raise NoStableRun(f"no {run_length}-step diagonal run in path")

    # window starting at step index k covers steps k..k+R-1, i.e. the R steps
    # succeeding point k and the R steps preceding point k+R
    p_in = int(full[0])
    p_out = int(full[-1]) + run_length

    in_track, in_mix = (int(v) for v in path.steps[p_in])
    out_track, out_mix = (int(v) for v in path.steps[p_out])
    times = mix_beats.beat_times
    return CuePoints(
        track_id=track_id,
        cue_in_mix_beat=in_mix,
        cue_out_mix_beat=out_mix,
        cue_in_track_beat=in_track,
        cue_out_track_beat=out_track,
        cue_in_sec=float(times[in_mix]),
        cue_out_sec=float(times[out_mix]),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_transitions(cues: list[CuePoints], mix_beats: BeatGrid) -> list[TransitionRecord]:
    """One record per adjacent cue pair, ordered as given.

    Negative lengths (overlapping detections) are preserved and flagged,
    not clamped. Empty or singleton input yields an empty list.
    """
    records = []
    for prev, nxt in zip(cues, cues[1:]):
        length_beats = nxt.cue_in_mix_beat - prev.cue_out_mix_beat
        records.append(TransitionRecord(
            prev_track_id=prev.track_id,
            next_track_id=nxt.track_id,
            cue_out_sec=prev.cue_out_sec,
            cue_in_sec=nxt.cue_in_sec,
            cue_mid_sec=(prev.cue_out_sec + nxt.cue_in_sec) / 2.0,
            length_beats=int(length_beats),
            length_sec=nxt.cue_in_sec - prev.cue_out_sec,
            cue_out_mix_beat=prev.cue_out_mix_beat,
            cue_in_mix_beat=nxt.cue_in_mix_beat,
            cue_mid_beat=_round_half_up((prev.cue_out_mix_beat + nxt.cue_in_mix_beat) / 2.0),
            overlapping=length_beats < 0,
        ))
    return records


def _nearest_beat(grid: BeatGrid, t: float) -> int:
    times = grid.beat_times
    j = int(np.searchsorted(times, t))
    if j <= 0:
        return 0
    if j >= len(times):
        return len(times) - 1
    # equidistant resolves to the later beat (half-up)
    return j if t - times[j - 1] >= times[j] - t else j - 1


def evaluate_segmentation(transitions: list[TransitionRecord], boundaries,
                          tolerances=DEFAULT_TOLERANCES,
                          mix_beats: BeatGrid | None = None) -> SegmentationReport:
    """Score cue estimates against annotated boundaries, paired by order.

    Per cue type, reports the median absolute time difference; cue-best
    takes the per-transition minimum over the three types before the
    median. Hit rates use the cue-in estimate. Beat-unit differences are
    included when mix_beats is given. Ties in the closest-type count go to
    cue-in, then cue-out.
    """
    boundaries = list(boundaries)
    if len(transitions) != len(boundaries):
        raise LengthMismatch(
            f"{len(transitions)} transitions vs {len(boundaries)} boundaries")
    tolerances = tuple(float(t) for t in tolerances)

    rows = []
    for tr, b in zip(transitions, boundaries):
        diffs = {
            "cue_out": tr.cue_out_sec - b,
            "cue_in": tr.cue_in_sec - b,
            "cue_mid": tr.cue_mid_sec - b,
        }
        row = {
            "prev_track_id": tr.prev_track_id,
            "next_track_id": tr.next_track_id,
            "boundary_sec": float(b),
            "diff_sec": {k: float(v) for k, v in diffs.items()},
        }
        if mix_beats is not None:
            b_beat = _nearest_beat(mix_beats, b)
            row["diff_beats"] = {
                "cue_out": tr.cue_out_mix_beat - b_beat,
                "cue_in": tr.cue_in_mix_beat - b_beat,
                "cue_mid": tr.cue_mid_beat - b_beat,
            }
        rows.append(row)

    report = SegmentationReport(rows=rows, tolerances=tolerances)
    if not rows:
        report.hit_rates = {t: None for t in tolerances}
        report.closest_counts = {t: 0 for t in CUE_TYPES}
        return report

    abs_diffs = {t: np.array([abs(r["diff_sec"][t]) for r in rows]) for t in CUE_TYPES}
    report.median_abs_diff = {t: float(np.median(d)) for t, d in abs_diffs.items()}
    per_row_best = np.min(np.stack([abs_diffs[t] for t in CUE_TYPES]), axis=0)
    report.cue_best_median = float(np.median(per_row_best))
    report.hit_rates = {t: float(np.mean(abs_diffs["cue_in"] <= t)) for t in tolerances}

    counts = {t: 0 for t in CUE_TYPES}
    priority = ("cue_in", "cue_out", "cue_mid")
    for k in range(len(rows)):
        winner = min(priority, key=lambda t: abs_diffs[t][k])
        counts[winner] += 1
    report.closest_counts = counts
    return report
