"""Versioned on-disk cache of beat grids and beat-synchronous features.

Entries are npz files keyed by (audio file content hash, parameter hash),
so a re-run with identical inputs is a pure cache hit and edits to either
the file or the parameters invalidate cleanly.
"""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np

from .features import BeatGrid, BeatSyncFeatures

log = logging.getLogger(__name__)

CACHE_VERSION = 1


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


class FeatureCache:
    def __init__(self, cache_dir: str | Path, param_signature: str):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.param_hash = hashlib.sha256(param_signature.encode()).hexdigest()[:8]

    def _entry_path(self, audio_path: Path) -> Path:
        return self.cache_dir / f"{_file_digest(audio_path)}-{self.param_hash}.npz"

    def load(self, audio_path: str | Path) -> BeatSyncFeatures | None:
        entry = self._entry_path(Path(audio_path))
        if not entry.exists():
            return None
        with np.load(entry, allow_pickle=False) as data:
            if int(data["version"]) != CACHE_VERSION:
                return None
            grid = BeatGrid(beat_times=data["beat_times"], tempo_bpm=float(data["tempo_bpm"]))
            chroma = data["chroma"] if data["chroma"].size else None
            mf = data["mfcc"] if data["mfcc"].size else None
        log.info("cache hit for %s", audio_path)
        return BeatSyncFeatures(beat_grid=grid, chroma=chroma, mfcc=mf)

    def store(self, audio_path: str | Path, feats: BeatSyncFeatures) -> Path:
        entry = self._entry_path(Path(audio_path))
        empty = np.empty((0, 0))
        np.savez(
            entry,
            version=np.int64(CACHE_VERSION),
            beat_times=feats.beat_grid.beat_times,
            tempo_bpm=np.float64(feats.beat_grid.tempo_bpm),
            chroma=feats.chroma if feats.chroma is not None else empty,
            mfcc=feats.mfcc if feats.mfcc is not None else empty,
        )
        return entry

    def get_or_compute(self, audio_path: str | Path, compute) -> BeatSyncFeatures:
        cached = self.load(audio_path)
        if cached is not None:
            return cached
        feats = compute()
        self.store(audio_path, feats)
        return feats
