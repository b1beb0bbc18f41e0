"""Mono 16-bit PCM WAV files, via the standard library ``wave`` module."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

FULL_SCALE = 0.9  # peak level written, leaving headroom against clipping


class WavFormatError(ValueError):
    pass


def write_wav(path: str | Path, samples: np.ndarray, fs: int, normalize: bool = True) -> None:
    """Write ``samples`` as mono little-endian int16.

    With ``normalize`` the peak is scaled to 0.9 of full scale; otherwise
    samples are taken as already in [-1, 1] and clipped.
    """
    x = np.asarray(samples, dtype=float)
    if normalize:
        peak = np.max(np.abs(x)) if x.size else 0.0
        if peak > 0:
            x = x * (FULL_SCALE / peak)
    pcm = np.round(np.clip(x, -1.0, 1.0) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(fs))
        w.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Samples scaled to [-1, 1] and the sample rate; stereo files are averaged."""
    with wave.open(str(path), "rb") as w:
        if w.getsampwidth() != 2:
            raise WavFormatError(f"expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        fs = w.getframerate()
        ch = w.getnchannels()
        raw = w.readframes(w.getnframes())
    x = np.maximum(np.frombuffer(raw, dtype="<i2") / 32767.0, -1.0)
    if ch > 1:
        x = x.reshape(-1, ch).mean(axis=1)
    return x, fs
