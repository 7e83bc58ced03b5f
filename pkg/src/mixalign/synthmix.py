"""Procedural track and mix synthesis with exact ground truth.

Tracks follow a DJ-friendly arrangement: percussion-only intro and outro
phrases (chord slots set to None) around a tonal body of per-beat
arpeggiated chord tones. Mixes crossfade consecutive tracks with an
equal-power law over those percussion sections, so the true cue-in /
cue-out instants are the exact fade boundaries recorded in GroundTruth.

Transposition is synthesized by shifting chord roots (exact chroma
rotation); tempo factors re-render at a scaled BPM so pitch is unaffected,
mimicking a "master tempo" deck.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .audio import DEFAULT_SAMPLE_RATE, AudioBuffer
from .errors import InvalidSpec

BEATS_PER_CHORD = 8
PHRASE_BEATS = 32
CHORD_DEGREES = np.array([0, 7, 12])  # root, fifth, octave
ROOT_MIDI = 48  # arpeggio base octave (C3)
PAD_MIDI = 36
KICK_HZ = 55.0


@dataclass(frozen=True)
class SynthTrackSpec:
    """Deterministic recipe for one synthetic track.

    chord_progression holds one root pitch class per 8 beats; None marks a
    percussion-only segment (intro/outro phrases).
    """

    seed: int
    tempo_bpm: float
    n_beats: int
    chord_progression: tuple
    timbre: float = 0.8

    def __post_init__(self):
        if self.tempo_bpm <= 0:
            raise InvalidSpec("tempo must be positive")
        if self.n_beats <= 0 or self.n_beats % PHRASE_BEATS:
            raise InvalidSpec(f"n_beats must be a positive multiple of {PHRASE_BEATS}")
        if len(self.chord_progression) != self.n_beats // BEATS_PER_CHORD:
            raise InvalidSpec("need one chord slot per 8 beats")
        for root in self.chord_progression:
            if root is not None and root not in range(12):
                raise InvalidSpec("chord roots must be pitch classes 0..11 or None")
        if not 0.0 < self.timbre <= 1.0:
            raise InvalidSpec("timbre must be in (0, 1]")


@dataclass(frozen=True)
class SynthMixSpec:
    """Tracklist, play windows, crossfades and per-track deck settings."""

    mix_id: str
    tracks: tuple
    windows: tuple  # (start_beat, end_beat) per track
    crossfade_beats: tuple  # one per transition
    tempo_factors: tuple
    transpose_semitones: tuple
    track_ids: tuple = ()

    def __post_init__(self):
        k = len(self.tracks)
        if not self.track_ids:
            object.__setattr__(self, "track_ids", tuple(f"track{i}" for i in range(k)))
        if len(self.track_ids) != k:
            raise InvalidSpec("track_ids length disagrees with tracks")
        if k == 0:
            raise InvalidSpec("a mix needs at least one track")
        if len(self.windows) != k or len(self.tempo_factors) != k \
                or len(self.transpose_semitones) != k:
            raise InvalidSpec("per-track field lengths disagree")
        if len(self.crossfade_beats) != max(k - 1, 0):
            raise InvalidSpec("need one crossfade per transition")
        for spec, (lo, hi) in zip(self.tracks, self.windows):
            if not 0 <= lo < hi <= spec.n_beats:
                raise InvalidSpec("play window outside track length")
        for i, fade in enumerate(self.crossfade_beats):
            w_prev = self.windows[i][1] - self.windows[i][0]
            w_next = self.windows[i + 1][1] - self.windows[i + 1][0]
            if fade < 0 or fade >= min(w_prev, w_next):
                raise InvalidSpec("crossfade must be shorter than both windows")
        for f in self.tempo_factors:
            if f <= 0:
                raise InvalidSpec("tempo factors must be positive")


@dataclass(frozen=True)
class TrackTruth:
    track_id: str
    cue_in_sec: float
    cue_out_sec: float
    tempo_factor: float
    transpose_semitones: int


@dataclass(frozen=True)
class GroundTruth:
    """Exact fade boundaries and deck settings for one rendered mix.

    Annotated boundaries are planted at true cue-ins, mirroring how human
    annotators label the point where the next track fully appears.
    """

    tracks: tuple
    annotated_boundaries_sec: tuple

    def __post_init__(self):
        b = self.annotated_boundaries_sec
        if any(y <= x for x, y in zip(b, b[1:])):
            raise InvalidSpec("boundaries must be strictly increasing")


def _tone(freq: float, n: int, sr: int, timbre: float) -> np.ndarray:
    t = np.arange(n) / sr
    wave = np.zeros(n)
    for k, amp in ((1, 1.0), (3, timbre / 9.0), (5, timbre ** 2 / 25.0)):
        wave += amp * np.sin(2.0 * np.pi * freq * k * t)
    return wave


def _envelope(n: int, sr: int) -> np.ndarray:
    env = np.ones(n)
    attack = min(int(0.005 * sr), n)
    release = min(int(0.030 * sr), n)
    env[:attack] = np.linspace(0.0, 1.0, attack, endpoint=False)
    if release:
        env[-release:] *= np.linspace(1.0, 0.0, release)
    return env


def _midi_hz(midi: float) -> float:
    return 440.0 * 2.0 ** ((midi - 69.0) / 12.0)


def synth_track(spec: SynthTrackSpec, sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Render a track: per-beat kick plus arpeggiated chord tones.

    Every beat carries a kick thump, a click transient and a seeded
    percussion hit (unique per beat); beats inside chord segments add one
    arpeggiated chord tone (root/fifth/octave, triangle-ish partials
    scaled by timbre) over a soft root-and-fifth pad. Identical spec and
    seed give bit-identical audio.
    """
    sr = sample_rate
    period = 60.0 / spec.tempo_bpm
    total = int(round(spec.n_beats * period * sr))

    rng = np.random.default_rng(spec.seed)
    degrees = rng.choice(CHORD_DEGREES, size=spec.n_beats)
    accents = rng.uniform(0.7, 1.0, size=spec.n_beats)
    # percussion sits above the chroma fold range so that only chord tones
    # carry key information; each beat gets its own seeded hit
    perc_freqs = np.exp(rng.uniform(np.log(2300.0), np.log(7000.0), size=(spec.n_beats, 3)))
    perc_amps = rng.uniform(0.3, 1.0, size=(spec.n_beats, 3))
    click = rng.standard_normal(max(1, int(0.004 * sr)))

    t_kick = np.arange(int(0.09 * sr)) / sr
    kick = np.sin(2.0 * np.pi * KICK_HZ * t_kick) * np.exp(-t_kick / 0.025)
    t_perc = np.arange(int(0.07 * sr)) / sr
    perc_env = np.exp(-t_perc / 0.02)

    out = np.zeros(total + sr)  # headroom for events spilling past the last beat

    def add(start, signal):
        out[start:start + len(signal)] += signal

    beat_len = int(period * sr)
    for b in range(spec.n_beats):
        start = int(round(b * period * sr))
        a = accents[b]
        add(start, kick * (0.9 * a))
        add(start, click * (0.25 * a))
        perc = (perc_amps[b][:, None] * np.sin(2.0 * np.pi * perc_freqs[b][:, None] * t_perc)).sum(axis=0)
        add(start, perc * perc_env * 0.3)

        root = spec.chord_progression[b // BEATS_PER_CHORD]
        if root is None:
            continue
        env = _envelope(beat_len, sr)
        tone = _tone(_midi_hz(ROOT_MIDI + root + degrees[b]), beat_len, sr, spec.timbre)
        add(start, tone * env * 0.55)
        pad = _tone(_midi_hz(PAD_MIDI + root), beat_len, sr, spec.timbre) \
            + _tone(_midi_hz(PAD_MIDI + root + 7), beat_len, sr, spec.timbre)
        add(start, pad * env * 0.18)

    out = out[:total]
    peak = np.max(np.abs(out)) if total else 0.0
    if peak > 0:
        out = out / peak
    return AudioBuffer(samples=out, sample_rate=sr)


def _transposed(spec: SynthTrackSpec, semitones: int) -> SynthTrackSpec:
    if semitones % 12 == 0:
        return spec
    prog = tuple(None if r is None else (r + semitones) % 12 for r in spec.chord_progression)
    return replace(spec, chord_progression=prog)


def crossfade_gains(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-power quarter-sine fade: (gain_in, gain_out) over n samples."""
    u = (np.arange(n) + 0.5) / n
    return np.sin(0.5 * np.pi * u), np.cos(0.5 * np.pi * u)


def render_mix(spec: SynthMixSpec,
               sample_rate: int = DEFAULT_SAMPLE_RATE) -> tuple[AudioBuffer, GroundTruth]:
    """Crossfade the tracks' play windows into one mix, with ground truth.

    Each track is re-rendered at tempo_bpm * tempo_factor with its chord
    roots shifted by transpose_semitones, then windows are overlapped by
    the per-transition crossfade under an equal-power law. GroundTruth
    records the exact fade boundaries: previous cue-out = fade start, next
    cue-in = fade end.
    """
    sr = sample_rate
    segments = []
    periods = []
    for track, (lo, hi), factor, shift in zip(spec.tracks, spec.windows,
                                              spec.tempo_factors, spec.transpose_semitones):
        played = replace(_transposed(track, shift), tempo_bpm=track.tempo_bpm * factor)
        rendered = synth_track(played, sr)
        period = 60.0 / played.tempo_bpm
        start = int(round(lo * period * sr))
        end = int(round(hi * period * sr))
        segments.append(rendered.samples[start:end].copy())
        periods.append(period)

    positions = [0]
    fades = []
    for i, fade_beats in enumerate(spec.crossfade_beats):
        fade = int(round(fade_beats * periods[i + 1] * sr))
        fades.append(fade)
        positions.append(positions[i] + len(segments[i]) - fade)

    total = positions[-1] + len(segments[-1])
    mix = np.zeros(total)
    for i, seg in enumerate(segments):
        seg = seg.copy()
        if i > 0 and fades[i - 1] > 0:
            gain_in, _ = crossfade_gains(fades[i - 1])
            seg[:fades[i - 1]] *= gain_in
        if i < len(fades) and fades[i] > 0:
            _, gain_out = crossfade_gains(fades[i])
            seg[len(seg) - fades[i]:] *= gain_out
        mix[positions[i]:positions[i] + len(seg)] += seg

    peak = np.max(np.abs(mix)) if total else 0.0
    if peak > 0:
        mix = mix / peak

    truths = []
    boundaries = []
    for i in range(len(spec.tracks)):
        cue_in = 0.0 if i == 0 else (positions[i] + fades[i - 1]) / sr
        cue_out = (positions[i] + len(segments[i])) / sr if i == len(segments) - 1 \
            else positions[i + 1] / sr
        truths.append(TrackTruth(
            track_id=spec.track_ids[i],
            cue_in_sec=cue_in,
            cue_out_sec=cue_out,
            tempo_factor=spec.tempo_factors[i],
            transpose_semitones=spec.transpose_semitones[i],
        ))
        boundaries.append(cue_in)

    truth = GroundTruth(tracks=tuple(truths), annotated_boundaries_sec=tuple(boundaries))
    return AudioBuffer(samples=mix, sample_rate=sr), truth


def _fresh_track(rng, mix_bpm: float, body_segments: int,
                 rest_segments: int = 8) -> tuple[SynthTrackSpec, float]:
    """New pool track with kick-only intro/outro phrases around a tonal body.

    8 rest slots per side = 64 beats, enough to host the longest crossfade.
    """
    factor = rng.uniform(0.92, 1.10)
    body = [int(r) for r in rng.integers(0, 12, size=body_segments)]
    prog = tuple([None] * rest_segments + body + [None] * rest_segments)
    spec = SynthTrackSpec(
        seed=int(rng.integers(2 ** 31)),
        tempo_bpm=mix_bpm / factor,
        n_beats=(2 * rest_segments + body_segments) * BEATS_PER_CHORD,
        chord_progression=prog,
        timbre=float(rng.uniform(0.5, 1.0)),
    )
    return spec, factor


def make_corpus(n_mixes: int, seed: int,
                crossfade_choices: tuple = (16, 32, 64),
                n_tracks_range: tuple = (3, 6),
                transposed_share: float = 0.10) -> list[tuple[SynthMixSpec, tuple]]:
    """Deterministic pseudo-random corpus of (mix spec, decoy specs) pairs.

    Tempo factors are drawn in [0.92, 1.10]; roughly transposed_share of
    track appearances are transposed by one or two semitones. Some tracks
    repeat across mixes (for cue-agreement statistics) and every mix gets
    at least one decoy sharing its tempo but with different chords.
    """
    if n_mixes < 1:
        raise InvalidSpec("n_mixes must be >= 1")
    rng = np.random.default_rng(seed)
    pool: list[tuple[SynthTrackSpec, str]] = []
    track_no = 0
    decoy_no = 0
    corpus = []

    for m in range(n_mixes):
        mix_bpm = float(rng.uniform(122.0, 130.0))
        k = int(rng.integers(n_tracks_range[0], n_tracks_range[1] + 1))

        tracks, ids, factors = [], [], []
        for _ in range(k):
            reused = None
            if pool and rng.random() < 0.4:
                cand_idx = rng.permutation(len(pool))[:4]
                for ci in cand_idx:
                    cand, cand_id = pool[ci]
                    f = mix_bpm / cand.tempo_bpm
                    if 0.92 <= f <= 1.10 and cand_id not in ids:
                        reused = (cand, cand_id, f)
                        break
            if reused is not None:
                spec, tid, factor = reused
            else:
                spec, factor = _fresh_track(rng, mix_bpm,
                                            body_segments=int(rng.choice([8, 12])))
                tid = f"t{track_no:04d}"
                track_no += 1
                pool.append((spec, tid))
            tracks.append(spec)
            ids.append(tid)
            factors.append(factor)

        transposes = []
        for _ in range(k):
            if rng.random() < transposed_share:
                transposes.append(int(rng.choice([1, -1, 2, -2], p=[0.4, 0.4, 0.1, 0.1])))
            else:
                transposes.append(0)

        fades = tuple(int(f) for f in rng.choice(crossfade_choices, size=k - 1))
        windows = tuple((0, t.n_beats) for t in tracks)
        mix_spec = SynthMixSpec(
            mix_id=f"mix{m:04d}",
            tracks=tuple(tracks),
            windows=windows,
            crossfade_beats=fades,
            tempo_factors=tuple(factors),
            transpose_semitones=tuple(transposes),
            track_ids=tuple(ids),
        )

        n_decoys = int(rng.integers(1, 3))
        decoys = []
        for _ in range(n_decoys):
            body = [int(r) for r in rng.integers(0, 12, size=24)]
            decoys.append((SynthTrackSpec(
                seed=int(rng.integers(2 ** 31)),
                tempo_bpm=mix_bpm,
                n_beats=24 * BEATS_PER_CHORD,
                chord_progression=tuple(body),
                timbre=float(rng.uniform(0.5, 1.0)),
            ), f"d{decoy_no:04d}"))
            decoy_no += 1
        corpus.append((mix_spec, tuple(decoys)))
    return corpus


def write_corpus(corpus, out_dir, sample_rate: int = DEFAULT_SAMPLE_RATE) -> list:
    """Render a corpus to disk: track/mix WAVs plus one sidecar per mix.

    The sidecar is a regular mix manifest with extra truth fields, so the
    CLI consumes synthetic corpora exactly like real ones. Decoy entries
    are interleaved between true tracks with phantom boundaries. Returns
    the manifest paths.
    """
    import json
    from pathlib import Path

    from .audio import write_wav

    out_dir = Path(out_dir)
    (out_dir / "tracks").mkdir(parents=True, exist_ok=True)
    (out_dir / "mixes").mkdir(parents=True, exist_ok=True)

    written_tracks = set()
    manifest_paths = []
    # decoy boundary offsets come from a dedicated stream so audio is
    # unaffected by how many sidecars were written before
    jitter = np.random.default_rng(0xD3C0)

    for mix_spec, decoys in corpus:
        for spec, tid in list(zip(mix_spec.tracks, mix_spec.track_ids)) + list(decoys):
            if tid not in written_tracks:
                write_wav(out_dir / "tracks" / f"{tid}.wav", synth_track(spec, sample_rate))
                written_tracks.add(tid)

        mix_audio, truth = render_mix(mix_spec, sample_rate)
        write_wav(out_dir / "mixes" / f"{mix_spec.mix_id}.wav", mix_audio)

        entries = []
        for t in truth.tracks:
            entries.append({
                "track_id": t.track_id,
                "audio": f"tracks/{t.track_id}.wav",
                "boundary_sec": t.cue_in_sec,
                "truth": {
                    "cue_in_sec": t.cue_in_sec,
                    "cue_out_sec": t.cue_out_sec,
                    "tempo_factor": t.tempo_factor,
                    "transpose_semitones": t.transpose_semitones,
                    "is_decoy": False,
                },
            })
        bounds = [t.cue_in_sec for t in truth.tracks]
        for _, did in decoys:
            gap = int(jitter.integers(0, len(bounds) - 1)) if len(bounds) > 1 else 0
            lo = bounds[gap]
            hi = bounds[gap + 1] if gap + 1 < len(bounds) else lo + 60.0
            entries.append({
                "track_id": did,
                "audio": f"tracks/{did}.wav",
                "boundary_sec": lo + (hi - lo) * float(jitter.uniform(0.3, 0.7)),
                "truth": {"is_decoy": True},
            })
        entries.sort(key=lambda e: e["boundary_sec"])

        sidecar = {
            "mix_id": mix_spec.mix_id,
            "mix_audio": f"mixes/{mix_spec.mix_id}.wav",
            "genre": "synthetic",
            "tracks": entries,
        }
        path = out_dir / f"{mix_spec.mix_id}.json"
        path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest_paths.append(path)
    return manifest_paths
