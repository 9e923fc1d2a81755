"""Mono WAV reading and writing (PCM 16-bit or IEEE float 32-bit)."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000


def read_wav(path, expected_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Return ``(samples, sample_rate)`` with samples as float64 in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    return samples, rate


def write_wav(path, samples, sample_rate: int = DEFAULT_SAMPLE_RATE, fmt: str = "float32"):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("write_wav expects a 1-D waveform")
    if not np.all(np.isfinite(samples)):
        raise ValueError("refusing to write non-finite samples")
    if fmt == "float32":
        data = samples.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}; use 'float32' or 'pcm16'")
    wavfile.write(path, sample_rate, data)
