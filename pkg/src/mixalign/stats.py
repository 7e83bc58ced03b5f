"""Corpus-level statistics: tempo adjustment, key transposition,
transition lengths and cue-point agreement across mixes."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .align import AlignmentResult
from .cue import CuePoints, TransitionRecord
from .errors import SpanTooShort
from .features import BeatGrid

MIN_TEMPO_SPAN_BEATS = 8
PHRASE_BEATS = 32
TEMPO_SHARE_THRESHOLDS_PCT = (5.0, 10.0, 20.0)
AGREEMENT_THRESHOLDS_BEATS = (0, 4, 32, 64)


def signed_semitones(shift: int) -> int:
    """Map a circular shift 0..11 to the signed range [-5, +6]."""
    return ((int(shift) + 5) % 12) - 5


def tempo_adjustment(track_bpm: float, mix_beats: BeatGrid, cues: CuePoints) -> float:
    """Percentage tempo difference of the played segment vs the track.

    Segment tempo comes from the median inter-beat interval of the mix
    grid between cue-in and cue-out (robust to isolated tracking errors).
    """
    span = cues.cue_out_mix_beat - cues.cue_in_mix_beat
    if span < MIN_TEMPO_SPAN_BEATS:
        raise SpanTooShort(f"cue span {span} beats < {MIN_TEMPO_SPAN_BEATS}")
    segment = mix_beats.beat_times[cues.cue_in_mix_beat:cues.cue_out_mix_beat + 1]
    segment_bpm = 60.0 / float(np.median(np.diff(segment)))
    return (segment_bpm / track_bpm - 1.0) * 100.0


def transposition_histogram(results: list[AlignmentResult]) -> dict[int, int]:
    """Counts per signed semitone from key-invariant alignment results."""
    return dict(Counter(signed_semitones(r.transposition_semitones) for r in results))


def fraction_transposed(counts: dict[int, int]) -> float:
    total = sum(counts.values())
    if total == 0:
        return 0.0
    return 1.0 - counts.get(0, 0) / total


@dataclass
class TransitionLengthHistogram:
    bins: dict[int, int] = field(default_factory=dict)
    negative_bins: dict[int, int] = field(default_factory=dict)
    phrase_peak_score: float | None = None

    @property
    def total(self) -> int:
        return sum(self.bins.values()) + sum(self.negative_bins.values())


def transition_length_histogram(transitions: list[TransitionRecord],
                                bin_beats: int = 1) -> TransitionLengthHistogram:
    """Histogram of transition lengths in beats.

    Negative lengths are binned separately and flagged. The phrase-peak
    score (diagnostic only) is the mean count at multiples of 32 beats
    divided by the mean count elsewhere, over the occupied range.
    """
    hist = TransitionLengthHistogram()
    pos = Counter()
    neg = Counter()
    for tr in transitions:
        binned = (tr.length_beats // bin_beats) * bin_beats
        (neg if tr.length_beats < 0 else pos)[binned] += 1
    hist.bins = dict(pos)
    hist.negative_bins = dict(neg)

    if pos:
        top = max(pos)
        slots = np.arange(1, top + 1)
        counts = np.array([pos.get(int(s), 0) for s in slots], dtype=np.float64)
        on_phrase = slots % PHRASE_BEATS == 0
        if on_phrase.any() and (~on_phrase).any():
            elsewhere = counts[~on_phrase].mean()
            if elsewhere > 0:
                hist.phrase_peak_score = float(counts[on_phrase].mean() / elsewhere)
    return hist


def cue_agreement(cue_sets: dict[str, list[CuePoints]]) -> list[int]:
    """Pairwise cue distances (track beats) for tracks played in >= 2 mixes.

    For each track, all unordered pairs of appearances contribute one
    cue-in and one cue-out distance; the two kinds are pooled into a
    single distribution. A track with n appearances yields n(n-1) values.
    """
    distances = []
    for _, cues in sorted(cue_sets.items()):
        if len(cues) < 2:
            continue
        for a, b in combinations(cues, 2):
            distances.append(abs(a.cue_in_track_beat - b.cue_in_track_beat))
            distances.append(abs(a.cue_out_track_beat - b.cue_out_track_beat))
    return distances


def _share(values, upper) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    return float(np.mean(np.abs(values) <= upper))


@dataclass
class StatsReport:
    tempo_diffs_pct: list[float] = field(default_factory=list)
    transposition_counts: dict[int, int] = field(default_factory=dict)
    transition_lengths: TransitionLengthHistogram = field(default_factory=TransitionLengthHistogram)
    agreement_distances_beats: list[int] = field(default_factory=list)

    def summary(self) -> dict:
        tempo_shares = {f"tempo_within_{int(t)}pct": _share(self.tempo_diffs_pct, t)
                        for t in TEMPO_SHARE_THRESHOLDS_PCT}
        agree_shares = {f"agreement_within_{t}_beats": _share(self.agreement_distances_beats, t)
                        for t in AGREEMENT_THRESHOLDS_BEATS}
        return {
            **tempo_shares,
            "fraction_transposed": fraction_transposed(self.transposition_counts),
            **agree_shares,
        }

    def to_json_dict(self) -> dict:
        return {
            "n_tempo_measurements": len(self.tempo_diffs_pct),
            "tempo_diffs_pct": [float(x) for x in self.tempo_diffs_pct],
            "transposition_counts": {str(k): v for k, v in sorted(self.transposition_counts.items())},
            "transition_length_bins": {str(k): v for k, v in sorted(self.transition_lengths.bins.items())},
            "transition_length_negative_bins": {str(k): v for k, v in
                                                sorted(self.transition_lengths.negative_bins.items())},
            "phrase_peak_score": self.transition_lengths.phrase_peak_score,
            "agreement_distances_beats": [int(d) for d in self.agreement_distances_beats],
            "summary": self.summary(),
        }
