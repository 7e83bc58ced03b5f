"""Transposition-invariant subsequence DTW over beat-synchronous features.

The track axis is fully consumed; the mix axis has free start and end.
Steps are {(1,1), (1,0), (0,1)} with uniform weights. Key invariance runs
the DP once per circular chroma shift of the track and keeps the cheapest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DegenerateInput, InvalidParams, MissingFeature
from .features import BeatSyncFeatures

FEATURE_MODES = ("mfcc", "chroma", "chroma_mfcc")
MATCH_THRESHOLD = 0.4

STEP_DIAG = (1, 1)
STEP_MIX = (0, 1)
STEP_TRACK = (1, 0)


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise feature distances: [n_track_beats x n_mix_beats]."""

    costs: np.ndarray

    def __post_init__(self):
        costs = np.ascontiguousarray(self.costs, dtype=np.float64)
        object.__setattr__(self, "costs", costs)
        if costs.ndim != 2:
            raise InvalidParams("cost matrix must be 2-D")
        if costs.size and (not np.all(np.isfinite(costs)) or costs.min() < 0):
            raise InvalidParams("costs must be finite and non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.costs.shape


@dataclass(frozen=True)
class WarpingPath:
    """Monotone alignment steps as an array of (track_beat, mix_beat) pairs."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        object.__setattr__(self, "steps", steps)
        if steps.ndim != 2 or steps.shape[1] != 2 or steps.shape[0] == 0:
            raise InvalidParams("path must be a non-empty (T, 2) array")
        deltas = np.diff(steps, axis=0)
        legal = {STEP_DIAG, STEP_MIX, STEP_TRACK}
        if any((int(d[0]), int(d[1])) not in legal for d in deltas):
            raise InvalidParams("path contains an illegal step")

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return (tuple(p) for p in self.steps)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.steps, axis=0)

    @property
    def diagonal_mask(self) -> np.ndarray:
        """Boolean per step (length T-1): True where the step is (1,1)."""
        d = self.deltas
        return (d[:, 0] == 1) & (d[:, 1] == 1)


@dataclass(frozen=True)
class AlignmentResult:
    path: WarpingPath
    total_cost: float
    transposition_semitones: int
    match_rate: float
    feature_mode: str
    key_invariant: bool


def _euclidean_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between columns of a and b."""
    sq = (
        np.sum(a ** 2, axis=0)[:, None]
        + np.sum(b ** 2, axis=0)[None, :]
        - 2.0 * (a.T @ b)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def _mode_features(feats: BeatSyncFeatures, mode: str) -> tuple[np.ndarray | None, np.ndarray | None]:
    if mode not in FEATURE_MODES:
        raise InvalidParams(f"unknown feature mode {mode!r}")
    chroma = feats.chroma if mode in ("chroma", "chroma_mfcc") else None
    mf = feats.mfcc if mode in ("mfcc", "chroma_mfcc") else None
    if mode in ("chroma", "chroma_mfcc") and chroma is None:
        raise MissingFeature("chroma requested but absent")
    if mode in ("mfcc", "chroma_mfcc") and mf is None:
        raise MissingFeature("mfcc requested but absent")
    return chroma, mf


def cost_matrix(track: BeatSyncFeatures, mix: BeatSyncFeatures, mode: str,
                chroma_shift: int = 0, scales: tuple | None = None) -> CostMatrix:
    """Euclidean beat-pair costs for one feature mode.

    MFCCs are compared after per-file cepstral mean subtraction, otherwise
    the mix's global loudness normalization shifts coefficient 0 by a
    constant that swamps every distance. chroma_mfcc sums the two
    per-feature matrices after dividing each by its own mean entry, so
    neither feature's scale dominates. chroma_shift circularly shifts the
    track chroma (semitones up) before comparison; when comparing several
    shifts, pass the shift-0 scales so all candidates share one normalizer
    (a per-shift mean would cancel the correct shift's advantage).
    """
    t_chroma, t_mfcc = _mode_features(track, mode)
    m_chroma, m_mfcc = _mode_features(mix, mode)

    parts = []
    if t_chroma is not None:
        shifted = np.roll(t_chroma, chroma_shift % 12, axis=0) if chroma_shift % 12 else t_chroma
        parts.append(_euclidean_costs(shifted, m_chroma))
    if t_mfcc is not None:
        parts.append(_euclidean_costs(t_mfcc - t_mfcc.mean(axis=1, keepdims=True),
                                      m_mfcc - m_mfcc.mean(axis=1, keepdims=True)))

    if len(parts) == 1:
        return CostMatrix(parts[0])
    if scales is None:
        scales = combination_scales(track, mix, mode)
    normed = [p / s if s > 0 else p for p, s in zip(parts, scales)]
    return CostMatrix(normed[0] + normed[1])


def combination_scales(track: BeatSyncFeatures, mix: BeatSyncFeatures, mode: str) -> tuple:
    """Mean entries of the unshifted per-feature cost matrices."""
    t_chroma, t_mfcc = _mode_features(track, mode)
    m_chroma, m_mfcc = _mode_features(mix, mode)
    chroma_scale = _euclidean_costs(t_chroma, m_chroma).mean() if t_chroma is not None else 1.0
    mfcc_scale = 1.0
    if t_mfcc is not None:
        mfcc_scale = _euclidean_costs(t_mfcc - t_mfcc.mean(axis=1, keepdims=True),
                                      m_mfcc - m_mfcc.mean(axis=1, keepdims=True)).mean()
    return (chroma_scale, mfcc_scale)


@numba.njit(cache=True, nogil=True)
def _subsequence_dp(costs):  # pragma: no cover - exercised via subsequence_dtw
    n, m = costs.shape
    acc = np.empty((n, m))
    # step codes: 0 = path start (row 0), 1 = diagonal, 2 = (0,1), 3 = (1,0)
    steps = np.zeros((n, m), dtype=np.uint8)
    for j in range(m):
        acc[0, j] = costs[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + costs[i, 0]
        steps[i, 0] = 3
        for j in range(1, m):
            best = acc[i - 1, j - 1]
            code = 1
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
                code = 2
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
                code = 3
            acc[i, j] = costs[i, j] + best
            steps[i, j] = code
    return acc, steps


def subsequence_dtw(costs: CostMatrix | np.ndarray) -> tuple[WarpingPath, float]:
    """Minimal-cost subsequence alignment of the track into the mix.

    Ties are broken by preferring the diagonal step, then (0,1). Returns
    the path (full track coverage, free mix endpoints) and its total cost.
    """
    if isinstance(costs, CostMatrix):
        c = costs.costs
    else:
        c = CostMatrix(np.asarray(costs)).costs
    n, m = c.shape
    if n < 2 or m < 1:
        raise DegenerateInput("need at least 2 track beats and 1 mix beat")
    if m < n:
        warnings.warn("mix has fewer beats than track; subsequence assumption violated",
                      stacklevel=2)

    acc, steps = _subsequence_dp(c)
    last = acc[n - 1]
    # free end: among tied minima take the latest column, which lets the
    # diagonal-first backtracking actually stay diagonal in flat regions
    j = int(np.flatnonzero(last == last.min())[-1])
    total = float(last[j])

    i = n - 1
    rev = [(i, j)]
    while i > 0:
        code = steps[i, j]
        if code == 1:
            i, j = i - 1, j - 1
        elif code == 2:
            j -= 1
        else:
            i -= 1
        rev.append((i, j))
    path = WarpingPath(np.array(rev[::-1], dtype=np.int64))
    return path, total


def match_rate(path: WarpingPath, n_track_beats: int, side: str = "track") -> float:
    """Fraction of diagonal steps: alignment-quality score in [0, 1].

    The default denominator is track beat intervals (n_track_beats - 1).
    side="mix" normalizes by the mix-beat span covered by the path instead.
    """
    if side not in ("track", "mix"):
        raise InvalidParams("side must be 'track' or 'mix'")
    diagonal = int(path.diagonal_mask.sum())
    if side == "track":
        if n_track_beats < 2:
            raise DegenerateInput("need at least 2 track beats")
        denom = n_track_beats - 1
    else:
        denom = int(path.steps[-1, 1] - path.steps[0, 1])
        if denom < 1:
            raise DegenerateInput("path covers no mix beats")
    return min(1.0, diagonal / denom)


_SIGNED_PREFERENCE = sorted(range(12), key=lambda s: (s != 0, abs(((s + 5) % 12) - 5), ((s + 5) % 12) - 5 < 0))


def align_single(track: BeatSyncFeatures, mix: BeatSyncFeatures, mode: str,
                 chroma_shift: int = 0, key_invariant: bool = False,
                 scales: tuple | None = None) -> AlignmentResult:
    """One DP run at a fixed chroma shift."""
    costs = cost_matrix(track, mix, mode, chroma_shift=chroma_shift, scales=scales)
    path, total = subsequence_dtw(costs)
    return AlignmentResult(
        path=path,
        total_cost=total,
        transposition_semitones=chroma_shift % 12,
        match_rate=match_rate(path, track.n_intervals),
        feature_mode=mode,
        key_invariant=key_invariant,
    )


def align_key_invariant(track: BeatSyncFeatures, mix: BeatSyncFeatures,
                        mode: str) -> AlignmentResult:
    """Best alignment over all 12 circular shifts of the track chroma.

    Cost ties prefer shift 0, then the smaller signed semitone magnitude
    (shifts 1..6 read as +1..+6, 7..11 as -5..-1), positive before negative.
    For MFCC-only input the shift set is a no-op and transposition is 0.
    """
    if mode == "mfcc":
        return align_single(track, mix, mode, key_invariant=True)
    scales = combination_scales(track, mix, mode) if mode == "chroma_mfcc" else None
    results = {s: align_single(track, mix, mode, chroma_shift=s, key_invariant=True,
                               scales=scales)
               for s in range(12)}
    best_cost = min(r.total_cost for r in results.values())
    for shift in _SIGNED_PREFERENCE:
        if results[shift].total_cost == best_cost:
            return results[shift]
    raise AssertionError("unreachable")


def filter_matched(results: list[AlignmentResult],
                   threshold: float = MATCH_THRESHOLD) -> tuple[list[AlignmentResult], list[AlignmentResult]]:
    """Partition into (matched, rejected) by match_rate >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParams("threshold must be in [0, 1]")
    matched = [r for r in results if r.match_rate >= threshold]
    rejected = [r for r in results if r.match_rate < threshold]
    return matched, rejected
