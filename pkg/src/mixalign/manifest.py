"""Mix manifest parsing.

A manifest is a JSON object describing one mix: its audio file, genre and
the ordered tracklist with human-annotated start boundaries. Relative audio
paths are resolved against the manifest's own directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NonMonotonicBoundaries, SchemaViolation


@dataclass(frozen=True)
class TrackEntry:
    track_id: str
    boundary_seconds: float
    track_audio_path: Path | None = None


@dataclass(frozen=True)
class MixManifest:
    mix_id: str
    mix_audio_path: Path
    entries: tuple[TrackEntry, ...]
    genre: str | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def boundaries(self) -> list[float]:
        return [e.boundary_seconds for e in self.entries]


def _require(obj: dict, key: str, types, where: str):
    if key not in obj:
        raise SchemaViolation(f"{where}: missing required field '{key}'")
    value = obj[key]
    if not isinstance(value, types):
        raise SchemaViolation(f"{where}: field '{key}' has wrong type")
    return value


def parse_manifest(path: str | Path) -> MixManifest:
    """Parse and validate a mix manifest file.

    Raises SchemaViolation for missing/ill-typed fields and
    NonMonotonicBoundaries when boundaries are not strictly increasing.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SchemaViolation(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{path}: top level must be an object")

    mix_id = _require(obj, "mix_id", str, str(path))
    mix_audio = _require(obj, "mix_audio", str, str(path))
    genre = obj.get("genre")
    if genre is not None and not isinstance(genre, str):
        raise SchemaViolation(f"{path}: field 'genre' has wrong type")
    tracks = _require(obj, "tracks", list, str(path))
    if not tracks:
        raise SchemaViolation(f"{path}: 'tracks' must contain at least one entry")

    base = path.parent
    entries = []
    for i, t in enumerate(tracks):
        where = f"{path} tracks[{i}]"
        if not isinstance(t, dict):
            raise SchemaViolation(f"{where}: entry must be an object")
        track_id = _require(t, "track_id", str, where)
        boundary = _require(t, "boundary_sec", (int, float), where)
        if isinstance(boundary, bool) or boundary < 0:
            raise SchemaViolation(f"{where}: 'boundary_sec' must be non-negative")
        audio = t.get("audio")
        if audio is not None and not isinstance(audio, str):
            raise SchemaViolation(f"{where}: field 'audio' has wrong type")
        audio_path = (base / audio) if audio else None
        entries.append(TrackEntry(track_id, float(boundary), audio_path))

    bounds = [e.boundary_seconds for e in entries]
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise NonMonotonicBoundaries(f"{path}: boundaries must be strictly increasing")

    extra = {k: v for k, v in obj.items() if k not in ("mix_id", "mix_audio", "genre", "tracks")}
    return MixManifest(
        mix_id=mix_id,
        mix_audio_path=base / mix_audio,
        entries=tuple(entries),
        genre=genre,
        extra=extra,
    )
