"""Framewise spectral features, beat tracking and beat-level aggregation.

The chain is: STFT -> (CENS chroma, MFCC, onset envelope) -> tempo ->
beat grid -> per-beat feature aggregation. Alignment operates only on the
beat-synchronous matrices produced here, which is what buys tempo
invariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.fft

from .audio import AudioBuffer
from .errors import EmptyInterval, InvalidParams, TooShort

FFT_SIZE = 2048
HOP = 512
N_MELS = 128
N_MFCC = 12
CENS_SMOOTH_FRAMES = 41
CENS_THRESHOLDS = (0.05, 0.1, 0.2, 0.4)
CENS_WEIGHTS = (0.25, 0.5, 0.75, 1.0)
TUNING_HZ = 440.0
MIDI_RANGE = (36, 96)  # folded pitch range C2..C7; keeps kick drums out
TEMPO_MIN = 60.0
TEMPO_MAX = 200.0
TEMPO_BIAS = 120.0
TEMPO_SPREAD = 1.0  # octaves
TIGHTNESS = 100.0


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude STFT: [n_bins x n_frames], n_bins = fft_size/2 + 1."""

    magnitudes: np.ndarray
    frame_rate: float
    fft_size: int
    hop: int

    def __post_init__(self):
        if self.magnitudes.shape[0] != self.fft_size // 2 + 1:
            raise InvalidParams("n_bins inconsistent with fft_size")

    @property
    def sample_rate(self) -> int:
        return int(round(self.frame_rate * self.hop))

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]


@dataclass(frozen=True)
class BeatGrid:
    """Beat timestamps in seconds plus the global tempo estimate."""

    beat_times: np.ndarray
    tempo_bpm: float

    def __post_init__(self):
        times = np.asarray(self.beat_times, dtype=np.float64)
        object.__setattr__(self, "beat_times", times)
        if self.tempo_bpm <= 0:
            raise InvalidParams("tempo must be positive")
        if len(times) < 2:
            raise InvalidParams("a beat grid needs at least two beats")
        if np.any(np.diff(times) <= 0):
            raise InvalidParams("beat times must be strictly increasing")
        med = float(np.median(np.diff(times)))
        if abs(med - 60.0 / self.tempo_bpm) > 0.1 * (60.0 / self.tempo_bpm):
            raise InvalidParams("median beat interval inconsistent with tempo")

    @property
    def n_intervals(self) -> int:
        return len(self.beat_times) - 1


@dataclass(frozen=True)
class BeatSyncFeatures:
    """Per-beat-interval feature matrices on a shared beat grid."""

    beat_grid: BeatGrid
    chroma: np.ndarray | None = None
    mfcc: np.ndarray | None = None

    def __post_init__(self):
        if self.chroma is None and self.mfcc is None:
            raise InvalidParams("at least one of chroma/mfcc must be present")
        n = self.beat_grid.n_intervals
        for name, mat in (("chroma", self.chroma), ("mfcc", self.mfcc)):
            if mat is not None and mat.shape[1] != n:
                raise InvalidParams(f"{name} width != number of beat intervals")

    @property
    def n_intervals(self) -> int:
        return self.beat_grid.n_intervals


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(audio: AudioBuffer, fft_size: int = FFT_SIZE, hop: int = HOP) -> Spectrogram:
    """Hann-windowed magnitude STFT with reflect padding.

    Frame k is centered on sample k*hop; n_frames = 1 + len(samples)//hop.
    """
    if fft_size <= 0 or fft_size & (fft_size - 1):
        raise InvalidParams("fft_size must be a power of two")
    if not 0 < hop <= fft_size:
        raise InvalidParams("hop must be in (0, fft_size]")
    x = audio.samples
    if x.size == 0:
        raise InvalidParams("audio is empty")

    pad = fft_size // 2
    mode = "reflect" if x.size > pad else "edge"
    padded = np.pad(x, pad, mode=mode)
    frames = np.lib.stride_tricks.sliding_window_view(padded, fft_size)[::hop]
    window = _hann_periodic(fft_size)
    mags = np.abs(np.fft.rfft(frames * window, axis=1)).T
    return Spectrogram(
        magnitudes=mags,
        frame_rate=audio.sample_rate / hop,
        fft_size=fft_size,
        hop=hop,
    )


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_bins: int, sample_rate: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filters, each normalized to unit sum.

    Unit-sum rows make a spectrally flat power spectrum map to equal mel
    energies. Filters too narrow to cover any FFT bin stay all-zero.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    fft_size = 2 * (n_bins - 1)
    bin_freqs = np.arange(n_bins) * sample_rate / fft_size
    mel_pts = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    f_pts = _mel_to_hz(mel_pts)

    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = f_pts[m], f_pts[m + 1], f_pts[m + 2]
        rising = (bin_freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - mid, 1e-12)
        tri = np.minimum(rising, falling)
        weights[m] = np.maximum(tri, 0.0)
    sums = weights.sum(axis=1, keepdims=True)
    nonzero = sums[:, 0] > 0
    weights[nonzero] /= sums[nonzero]
    return weights


def mfcc(spec: Spectrogram, n_mels: int = N_MELS, n_coeffs: int = N_MFCC) -> np.ndarray:
    """Log-mel power energies followed by an orthonormal DCT-II.

    Returns [n_coeffs x n_frames]; coefficient 0 (energy) is kept.
    """
    n_bins = spec.magnitudes.shape[0]
    if not 0 < n_coeffs <= n_mels <= n_bins:
        raise InvalidParams("need 0 < n_coeffs <= n_mels <= n_bins")
    bank = mel_filterbank(n_mels, n_bins, spec.sample_rate)
    energies = bank @ (spec.magnitudes ** 2)
    log_e = np.log(np.maximum(energies, 1e-10))
    return scipy.fft.dct(log_e, type=2, axis=0, norm="ortho")[:n_coeffs]


def _pitch_class_map(n_bins: int, sample_rate: int, tuning_ref: float) -> np.ndarray:
    """Per-FFT-bin pitch class (0 = C), or -1 for bins outside the range."""
    fft_size = 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * sample_rate / fft_size
    classes = np.full(n_bins, -1, dtype=np.int64)
    positive = freqs > 0
    midi = np.zeros(n_bins)
    midi[positive] = 69.0 + 12.0 * np.log2(freqs[positive] / tuning_ref)
    rounded = np.round(midi).astype(np.int64)
    ok = positive & (rounded >= MIDI_RANGE[0]) & (rounded <= MIDI_RANGE[1])
    classes[ok] = rounded[ok] % 12
    return classes


def chroma_cens(spec: Spectrogram, tuning_ref: float = TUNING_HZ) -> np.ndarray:
    """Chroma energy normalized statistics: [12 x n_frames].

    Pitch-class power folding (A = tuning_ref, class 0 = C), per-frame L1
    normalization, amplitude quantization, 41-frame temporal smoothing and
    per-frame L2 normalization. All-silent frames come out all-zero.
    """
    if tuning_ref <= 0:
        raise InvalidParams("tuning_ref must be positive")
    classes = _pitch_class_map(spec.magnitudes.shape[0], spec.sample_rate, tuning_ref)
    power = spec.magnitudes ** 2

    folded = np.zeros((12, spec.n_frames))
    for pc in range(12):
        sel = classes == pc
        if np.any(sel):
            folded[pc] = power[sel].sum(axis=0)

    l1 = folded.sum(axis=0)
    scale = np.where(l1 > 0, l1, 1.0)
    v = folded / scale

    quant = np.zeros_like(v)
    for thr, w in zip(CENS_THRESHOLDS, CENS_WEIGHTS):
        quant = np.where(v >= thr, w, quant)

    win = np.hanning(CENS_SMOOTH_FRAMES)
    win /= win.sum()
    smoothed = np.empty_like(quant)
    for pc in range(12):
        smoothed[pc] = np.convolve(quant[pc], win, mode="same")

    norms = np.linalg.norm(smoothed, axis=0)
    return smoothed / np.where(norms > 0, norms, 1.0)


def onset_envelope(spec: Spectrogram, n_mels: int = N_MELS) -> np.ndarray:
    """Spectral flux: summed positive first differences of log mel bands.

    The raw flux peaks about a quarter window before the transient's true
    center (the energy rises as the event slides into the analysis
    window), so the envelope is delayed by fft_size/(4*hop) frames to
    re-center onsets on their actual times.
    """
    if spec.n_frames == 0:
        raise InvalidParams("empty spectrogram")
    bank = mel_filterbank(n_mels, spec.magnitudes.shape[0], spec.sample_rate)
    log_mel = np.log(np.maximum(bank @ spec.magnitudes, 1e-10))
    flux = np.zeros(spec.n_frames)
    if spec.n_frames > 1:
        diff = np.diff(log_mel, axis=1)
        flux[1:] = np.maximum(diff, 0.0).sum(axis=0)
    lag = spec.fft_size // (4 * spec.hop)
    if lag:
        flux = np.concatenate([np.zeros(lag), flux[:-lag] if lag < len(flux) else flux[:0]])
    return flux


def _autocorrelate(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = len(x)
    size = scipy.fft.next_fast_len(n + max_lag + 1)
    spectrum = np.fft.rfft(x, size)
    ac = np.fft.irfft(spectrum * np.conj(spectrum), size)
    return ac[:max_lag + 1]


def _parabolic_offset(y_prev: float, y0: float, y_next: float) -> float:
    denom = y_prev - 2.0 * y0 + y_next
    if denom == 0:
        return 0.0
    delta = 0.5 * (y_prev - y_next) / denom
    return float(np.clip(delta, -0.5, 0.5))


def estimate_tempo(onsets: np.ndarray, frame_rate: float) -> float:
    """Tempo in [60, 200] BPM from log-Gaussian-weighted onset autocorrelation.

    The weighting is centered on 120 BPM with a one-octave spread. The
    coarse lag peak is refined at its largest available multiple to get
    sub-frame lag resolution. A zero envelope returns the 120 BPM bias
    center (degenerate input).
    """
    onsets = np.asarray(onsets, dtype=np.float64)
    n = len(onsets)
    if n / frame_rate < 10.0:
        raise TooShort("need at least 10 s of audio for tempo estimation")
    x = onsets - onsets.mean()
    if not np.any(x):
        return TEMPO_BIAS

    lag_min = max(1, int(np.ceil(60.0 * frame_rate / TEMPO_MAX)))
    lag_max = min(n - 1, int(np.floor(60.0 * frame_rate / TEMPO_MIN)))
    if lag_max <= lag_min:
        raise TooShort("envelope too short for the tempo range")
    max_lag = min(n - 1, 8 * lag_max + lag_max // 4 + 2)
    ac = _autocorrelate(x, max_lag)

    lags = np.arange(lag_min, lag_max + 1)
    bpms = 60.0 * frame_rate / lags
    weights = np.exp(-0.5 * (np.log2(bpms / TEMPO_BIAS) / TEMPO_SPREAD) ** 2)
    # box-smooth before the argmax: a fractional beat period splits its
    # mass over two adjacent lags while its doubled lag may concentrate in
    # one, which would otherwise masquerade as an octave-down tempo
    ac_smooth = np.convolve(ac, np.ones(3) / 3.0, mode="same")
    coarse = int(lags[np.argmax(ac_smooth[lag_min:lag_max + 1] * weights)])

    # refine at the largest multiple of the coarse lag that fits
    m = max(1, min(8, (len(ac) - 2) // coarse))
    search = max(2, coarse // 4)
    center = m * coarse
    lo = max(1, center - search)
    hi = min(len(ac) - 2, center + search)
    peak = lo + int(np.argmax(ac[lo:hi + 1]))
    delta = _parabolic_offset(ac[peak - 1], ac[peak], ac[peak + 1])
    bpm = 60.0 * frame_rate * m / (peak + delta)
    return float(np.clip(bpm, TEMPO_MIN, TEMPO_MAX))


@numba.njit(cache=True, nogil=True)
def _beat_dp(localscore, period, tightness):  # pragma: no cover - exercised via track_beats
    n = localscore.shape[0]
    backlink = np.full(n, -1, dtype=np.int64)
    cumscore = np.zeros(n)
    lag_lo = max(1, int(round(period / 2.0)))
    lag_hi = max(lag_lo + 1, int(round(2.0 * period)))
    txwt = np.empty(lag_hi + 1)
    for lag in range(lag_lo, lag_hi + 1):
        txwt[lag] = -tightness * np.log(lag / period) ** 2
    max_local = localscore.max()
    first_beat = True
    for i in range(n):
        best = -1e300
        best_j = -1
        for lag in range(lag_lo, lag_hi + 1):
            j = i - lag
            s = txwt[lag] + (cumscore[j] if j >= 0 else 0.0)
            if s > best:
                best = s
                best_j = j
        cumscore[i] = localscore[i] + best
        if first_beat and localscore[i] < 0.01 * max_local:
            backlink[i] = -1
        else:
            backlink[i] = best_j
            first_beat = False
    return backlink, cumscore


def track_beats(onsets: np.ndarray, tempo_bpm: float, frame_rate: float,
                tightness: float = TIGHTNESS) -> BeatGrid:
    """Dynamic-programming beat tracker at a given tempo.

    Maximizes smoothed onset strength plus a log-squared regularity penalty
    on inter-beat intervals. Beat frames are refined to sub-frame precision
    by parabolic interpolation of the local score.
    """
    if not TEMPO_MIN <= tempo_bpm <= TEMPO_MAX:
        raise InvalidParams(f"tempo {tempo_bpm} outside [{TEMPO_MIN}, {TEMPO_MAX}]")
    onsets = np.asarray(onsets, dtype=np.float64)
    period = 60.0 * frame_rate / tempo_bpm
    if len(onsets) < int(round(2 * period)) + 2:
        raise TooShort("envelope shorter than two beat periods")

    std = onsets.std()
    env = onsets / std if std > 0 else onsets.copy()
    p = max(1, int(round(period)))
    win = np.exp(-0.5 * (np.arange(-p, p + 1) * 32.0 / period) ** 2)
    # normalized convolution (no edge roll-off), centered so that a flat
    # envelope scores zero everywhere and the regularity penalty alone
    # decides the spacing
    localscore = np.convolve(env, win, mode="same") / np.convolve(np.ones_like(env), win, mode="same")
    localscore = localscore - localscore.mean()

    backlink, cumscore = _beat_dp(localscore, period, float(tightness))

    # last beat: final local maximum of the cumulative score above threshold
    padded = np.pad(cumscore, 1, mode="edge")
    is_max = (cumscore >= padded[:-2]) & (cumscore >= padded[2:])
    maxima = np.flatnonzero(is_max)
    med = np.median(cumscore[maxima])
    good = maxima[cumscore[maxima] >= 0.5 * med]
    last = int(good[-1]) if len(good) else int(np.argmax(cumscore))

    frames = [last]
    while backlink[frames[-1]] >= 0:
        frames.append(int(backlink[frames[-1]]))
    frames = frames[::-1]

    # snap each beat onto the nearest localscore peak (the DP may sit one
    # frame off when the regularity term outweighs the onset term); ties,
    # e.g. on flat scores, keep the original frame
    n = len(localscore)
    snapped = []
    for b in frames:
        lo, hi = max(0, b - 2), min(n, b + 3)
        window = localscore[lo:hi]
        best = window.max()
        cands = lo + np.flatnonzero(window == best)
        snapped.append(int(cands[np.argmin(np.abs(cands - b))]))
    frames = [b for k, b in enumerate(snapped) if k == 0 or b > snapped[k - 1]]

    # drop weak leading/trailing beats (e.g. a beat placed in tail silence)
    strengths = np.convolve(localscore[frames], np.hanning(5), mode="same")
    threshold = 0.5 * float(np.sqrt(np.mean(strengths ** 2)))
    keep = np.flatnonzero(strengths > threshold)
    if len(keep):
        frames = frames[keep.min():keep.max() + 1]
    if len(frames) < 2:
        raise TooShort("tracker produced fewer than two beats")

    # sub-frame refinement: centroid of the raw flux mass around the beat,
    # plus half a frame because a first difference of frames k-1 and k
    # measures change at k - 1/2
    times = np.empty(len(frames))
    for k, b in enumerate(frames):
        lo, hi = max(0, b - 2), min(len(onsets), b + 3)
        mass = onsets[lo:hi] - onsets[lo:hi].min()
        total = mass.sum()
        if total > 0:
            delta = float((mass * np.arange(lo, hi)).sum() / total) - b + 0.5
            delta = float(np.clip(delta, -1.0, 1.0))
        else:
            delta = 0.0
        times[k] = (b + delta) / frame_rate
    return BeatGrid(beat_times=times, tempo_bpm=float(tempo_bpm))


def beat_sync(features: np.ndarray, beats: BeatGrid, frame_rate: float,
              normalize: bool = False) -> np.ndarray:
    """Aggregate framewise features to per-dimension means over beat intervals.

    Column j is the mean over frames with center time in [beat_j, beat_{j+1}).
    With normalize=True each output column is rescaled to unit L2 norm
    (used for chroma); all-zero columns stay zero.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n_frames = features.shape[1]
    # frame k has center time k / frame_rate
    idx = np.ceil(beats.beat_times * frame_rate - 1e-9).astype(np.int64)
    idx = np.clip(idx, 0, n_frames)

    out = np.empty((features.shape[0], beats.n_intervals))
    for j in range(beats.n_intervals):
        lo, hi = idx[j], idx[j + 1]
        if hi <= lo:
            raise EmptyInterval(f"beat interval {j} contains no frames")
        out[:, j] = features[:, lo:hi].mean(axis=1)
    if normalize:
        norms = np.linalg.norm(out, axis=0)
        out = out / np.where(norms > 0, norms, 1.0)
    return out


def extract_beatsync(audio: AudioBuffer, compute_chroma: bool = True,
                     compute_mfcc: bool = True) -> BeatSyncFeatures:
    """Full feature chain for one file: STFT to beat-synchronous matrices."""
    spec = stft(audio)
    onsets = onset_envelope(spec)
    tempo = estimate_tempo(onsets, spec.frame_rate)
    grid = track_beats(onsets, tempo, spec.frame_rate)
    chroma = None
    mf = None
    if compute_chroma:
        chroma = beat_sync(chroma_cens(spec), grid, spec.frame_rate, normalize=True)
    if compute_mfcc:
        mf = beat_sync(mfcc(spec), grid, spec.frame_rate)
    return BeatSyncFeatures(beat_grid=grid, chroma=chroma, mfcc=mf)
