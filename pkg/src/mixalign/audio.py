"""WAV decoding, band-limited resampling and the mono audio buffer type.

Only plain RIFF/WAVE containers are handled: PCM 16-bit integer or IEEE
32-bit float, one or two channels, any sample rate. Everything is decoded
to a peak-normalized mono float buffer at the working sample rate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import CorruptFile, EmptyAudio, UnsupportedFormat

DEFAULT_SAMPLE_RATE = 22050

_SINC_HALF_CROSSINGS = 32  # zero crossings per side; taps >= 64 for any ratio


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample stream in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if samples.size and np.max(np.abs(samples)) > 1.0 + 1e-9:
            raise ValueError("samples exceed [-1, 1]")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def _sinc_kernel(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc lowpass for a polyphase up/down conversion."""
    maxud = max(up, down)
    half = _SINC_HALF_CROSSINGS * maxud
    n = np.arange(-half, half + 1)
    fc = 0.5 / maxud  # cutoff at the narrower Nyquist, in upsampled cycles
    return 2.0 * fc * np.sinc(2.0 * fc * n) * np.kaiser(2 * half + 1, 8.6)


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Band-limited resampling with a windowed-sinc kernel (>= 64 taps)."""
    if rate_in <= 0 or rate_out <= 0:
        raise ValueError("sample rates must be positive")
    x = np.asarray(samples, dtype=np.float64)
    if rate_in == rate_out or x.size == 0:
        return x.copy()
    frac = Fraction(rate_out, rate_in)
    up, down = frac.numerator, frac.denominator
    return resample_poly(x, up, down, window=_sinc_kernel(up, down))


def _parse_wav(data: bytes) -> tuple[np.ndarray, int]:
    """Return (frames[n, channels] as float64, sample_rate)."""
    if len(data) < 12:
        raise CorruptFile("file shorter than a RIFF header")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptFile("fmt chunk truncated")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            if len(body) < size:
                raise CorruptFile("data chunk truncated")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise CorruptFile("missing fmt chunk")
    if payload is None:
        raise CorruptFile("missing data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format not in (1, 3):
        raise UnsupportedFormat(f"format tag {audio_format} not PCM or IEEE float")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels unsupported")
    if audio_format == 1 and bits != 16:
        raise UnsupportedFormat(f"{bits}-bit integer PCM unsupported")
    if audio_format == 3 and bits != 32:
        raise UnsupportedFormat(f"{bits}-bit float unsupported")
    if block_align != channels * bits // 8:
        raise CorruptFile("block alignment inconsistent with format")

    if len(payload) % block_align:
        raise CorruptFile("data chunk not a whole number of frames")
    if audio_format == 1:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return raw.reshape(-1, channels), sample_rate


def decode_audio(path: str | Path, target_rate: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Decode a WAV file to a peak-normalized mono buffer at target_rate.

    Stereo inputs are downmixed by channel mean. Silent files are returned
    as-is (normalization skipped). Raises UnsupportedFormat, CorruptFile or
    EmptyAudio.
    """
    data = Path(path).read_bytes()
    frames, rate = _parse_wav(data)
    if frames.shape[0] == 0:
        raise EmptyAudio(str(path))
    mono = frames.mean(axis=1)
    mono = resample(mono, rate, target_rate)
    peak = np.max(np.abs(mono)) if mono.size else 0.0
    if peak > 0:
        mono = mono / peak
    return AudioBuffer(samples=mono, sample_rate=target_rate)


def write_wav(path: str | Path, buffer: AudioBuffer) -> None:
    """Write a mono 16-bit PCM WAV file."""
    x = np.clip(buffer.samples, -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, buffer.sample_rate, buffer.sample_rate * 2, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)
