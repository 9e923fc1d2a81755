"""Far-field mixture simulation with exponential-decay toy room impulse responses.

A mixture is ``y = h * s + g * n`` where ``g`` sets the reverberant
signal-to-noise ratio (RSNR, energy of ``h * s`` over energy of ``g * n``) and
the target is the direct-path component of ``h * s``.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .wavio import DEFAULT_SAMPLE_RATE, read_wav, write_wav

MANIFEST_FIELDS = ("id", "noisy_path", "clean_path", "text", "duration_s", "rsnr_db", "t60_s", "seed")


@dataclass(frozen=True)
class ToyRir:
    taps: np.ndarray
    sample_rate: int
    t60: float
    direct_index: int = 0


def rir_envelope(n, sample_rate: int, t60: float):
    """Amplitude envelope reaching -60 dB at ``t60`` seconds."""
    return 10.0 ** (-3.0 * np.asarray(n, dtype=float) / (sample_rate * t60))


def synth_rir(t60: float, sample_rate: int = DEFAULT_SAMPLE_RATE, length: int | None = None,
              rng=None, drr_db: float = 10.0) -> ToyRir:
    """Unit direct tap followed by exponentially decaying Gaussian noise.

    The tail is scaled so that direct-to-reverberant energy ratio is ``drr_db``.
    """
    if not t60 > 0:
        raise ValueError(f"t60 must be positive, got {t60}")
    min_len = int(np.ceil(sample_rate * t60 / 3.0))
    if length is None:
        length = int(np.ceil(sample_rate * t60)) + 1
    if length < min_len:
        raise ValueError(
            f"length {length} truncates more than 1% of the tail energy for t60={t60}s "
            f"(need >= {min_len} samples)"
        )
    rng = rng if rng is not None else np.random.default_rng()
    n = np.arange(length)
    taps = rng.standard_normal(length) * rir_envelope(n, sample_rate, t60)
    taps[0] = 0.0
    tail_energy = np.sum(taps**2)
    if tail_energy > 0:
        taps *= np.sqrt(10.0 ** (-drr_db / 10.0) / tail_energy)
    peak = np.max(np.abs(taps[1:])) if length > 1 else 0.0
    if peak >= 1.0:
        taps *= 0.99 / peak
    taps[0] = 1.0
    return ToyRir(taps, sample_rate, t60, 0)


def schroeder_decay_db(taps) -> np.ndarray:
    """Backward-integrated energy decay curve in dB (0 dB at the start)."""
    e = np.cumsum(np.asarray(taps, dtype=float)[::-1] ** 2)[::-1]
    return 10.0 * np.log10(e / e[0])


def fit_t60(taps, sample_rate: int, lo_db: float = -5.0, hi_db: float = -35.0) -> float:
    """T60 extrapolated from a linear fit to the decay curve between two levels."""
    edc = schroeder_decay_db(taps)
    sel = (edc <= lo_db) & (edc >= hi_db)
    if sel.sum() < 2:
        raise ValueError("decay curve does not span the fit range")
    n = np.nonzero(sel)[0]
    slope = np.polyfit(n / sample_rate, edc[sel], 1)[0]
    return -60.0 / slope


def fit_noise(n, length: int, rng=None) -> np.ndarray:
    """Tile (with a random circular offset) or crop noise to ``length`` samples."""
    n = np.asarray(n, dtype=float)
    if n.size == 0:
        raise ValueError("empty noise signal")
    offset = int(rng.integers(0, n.size)) if rng is not None else 0
    reps = int(np.ceil((length + offset) / n.size))
    return np.tile(n, reps)[offset: offset + length]


def mix_at_rsnr(s, h: ToyRir, n, rsnr_db: float, rng=None):
    """Return ``(y, x_direct, gain)`` for clean ``s``, RIR ``h`` and noise ``n``.

    Outputs have the length of ``s``.  ``gain`` scales the noise so that
    ``10 log10(|h*s|^2 / |gain*n|^2) == rsnr_db``.
    """
    s = np.asarray(s, dtype=float)
    if not np.isfinite(rsnr_db):
        raise ValueError("rsnr_db must be finite")
    if np.sum(s**2) == 0:
        raise ValueError("clean signal has zero energy")
    rev = fftconvolve(s, h.taps)[: s.size]
    noise = fit_noise(n, s.size, rng)
    p_rev, p_noise = np.sum(rev**2), np.sum(noise**2)
    if p_noise == 0:
        raise ValueError("noise signal has zero energy")
    gain = np.sqrt(p_rev / (p_noise * 10.0 ** (rsnr_db / 10.0)))
    y = rev + gain * noise
    d = h.direct_index
    x_direct = np.zeros_like(s)
    x_direct[d:] = h.taps[d] * s[: s.size - d]
    return y, x_direct, float(gain)


def measured_rsnr_db(y, x_direct, h: ToyRir, s) -> float:
    rev = fftconvolve(np.asarray(s, dtype=float), h.taps)[: len(s)]
    noise = np.asarray(y) - rev
    return float(10 * np.log10(np.sum(rev**2) / np.sum(noise**2)))


# ---------------------------------------------------------------------------
# Toy source material
# ---------------------------------------------------------------------------

_SYLLABLES = ("ba", "di", "ko", "mu", "ne", "pa", "ri", "so", "tu", "ve", "la", "go")


def harmonic_utterance(duration_s: float, sample_rate: int, rng):
    """Speech-like harmonic signal and a pseudo-word transcript.

    Voiced segments (syllables) carry a gliding fundamental with harmonics
    shaped by two formant bumps; segments are separated by short pauses.
    """
    L = int(round(duration_s * sample_rate))
    tt = np.arange(L) / sample_rate
    f0_base = rng.uniform(90.0, 220.0)
    rate, phi = rng.uniform(0.5, 3.0), rng.uniform(0, 2 * np.pi)
    f0 = f0_base * (1.0 + 0.12 * np.sin(2 * np.pi * rate * tt + phi))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    out = np.zeros(L)
    words = []
    pos = int(rng.uniform(0.02, 0.1) * sample_rate)
    while pos < L - int(0.08 * sample_rate):
        seg = int(rng.uniform(0.12, 0.3) * sample_rate)
        seg = min(seg, L - pos)
        f1, f2 = rng.uniform(300, 900), rng.uniform(900, 2500)
        n_harm = int(4000 // f0_base)
        sig = np.zeros(seg)
        idx = slice(pos, pos + seg)
        for k in range(1, n_harm + 1):
            fk = k * f0_base
            amp = (np.exp(-0.5 * ((fk - f1) / 150.0) ** 2) + 0.6 * np.exp(-0.5 * ((fk - f2) / 250.0) ** 2)
                   + 0.05) / k**0.5
            sig += amp * np.sin(k * phase[idx] + rng.uniform(0, 2 * np.pi))
        out[idx] += sig * np.hanning(seg)
        words.append(rng.choice(_SYLLABLES) + rng.choice(_SYLLABLES))
        pos += seg + int(rng.uniform(0.04, 0.15) * sample_rate)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= rng.uniform(0.3, 0.8) / peak
    return out, " ".join(words)


def toy_noise(duration_s: float, sample_rate: int, rng) -> np.ndarray:
    """White or spectrally tilted Gaussian noise with slow level fluctuation."""
    L = int(round(duration_s * sample_rate))
    white = rng.standard_normal(L)
    tilt = rng.uniform(-1.0, 0.5)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(L, 1.0 / sample_rate)
    spec *= np.maximum(f, 50.0) ** (tilt / 2) / 50.0 ** (tilt / 2)
    n = np.fft.irfft(spec, n=L)
    mod = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.1, 1.0) * np.arange(L) / sample_rate)
    n *= mod
    return 0.3 * n / np.max(np.abs(n))


def make_toy_sources(out_dir, n_clean: int, n_noise: int, duration_s: float = 1.0,
                     sample_rate: int = DEFAULT_SAMPLE_RATE, seed: int = 0):
    """Write ``clean/*.wav`` (+ ``.txt`` transcripts) and ``noise/*.wav`` under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "clean").mkdir(parents=True, exist_ok=True)
    (out_dir / "noise").mkdir(parents=True, exist_ok=True)
    for i in range(n_clean):
        rng = np.random.default_rng([seed, 0, i])
        s, text = harmonic_utterance(duration_s, sample_rate, rng)
        write_wav(out_dir / "clean" / f"utt{i:05d}.wav", s, sample_rate)
        (out_dir / "clean" / f"utt{i:05d}.txt").write_text(text + "\n", encoding="utf-8")
    for i in range(n_noise):
        rng = np.random.default_rng([seed, 1, i])
        write_wav(out_dir / "noise" / f"noise{i:05d}.wav", toy_noise(duration_s, sample_rate, rng), sample_rate)
    return out_dir / "clean", out_dir / "noise"


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureDistribution:
    n_items: int = 100
    rsnr_db: tuple = (-5.0, 20.0)
    t60_s: tuple = (0.1, 0.5)
    drr_db: float = 10.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    seed: int = 0
    wav_format: str = "float32"

    def __post_init__(self):
        lo, hi = self.t60_s
        if not 0.05 <= lo <= hi <= 1.0:
            raise ValueError(f"t60 range must lie in [0.05, 1.0], got {self.t60_s}")
        if not self.rsnr_db[0] <= self.rsnr_db[1]:
            raise ValueError(f"bad RSNR range {self.rsnr_db}")


def _list_wavs(d):
    d = Path(d)
    if not d.is_dir():
        raise ValueError(f"{d} is not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() == ".wav")
    if not files:
        raise ValueError(f"no WAV files in {d}")
    return files


def item_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _make_item(i, clean_files, noise_files, dist: MixtureDistribution, out_dir: Path):
    iseed = item_seed(dist.seed, i)
    rng = np.random.default_rng(iseed)
    clean_path = clean_files[i % len(clean_files)]
    noise_path = noise_files[int(rng.integers(len(noise_files)))]
    s, _ = read_wav(clean_path, dist.sample_rate)
    n, _ = read_wav(noise_path, dist.sample_rate)
    rsnr = float(rng.uniform(*dist.rsnr_db))
    t60 = float(rng.uniform(*dist.t60_s))
    h = synth_rir(t60, dist.sample_rate, rng=rng, drr_db=dist.drr_db)
    y, x, _ = mix_at_rsnr(s, h, n, rsnr, rng=rng)
    peak = np.max(np.abs(y))
    if peak > 0.99:
        y, x = y * (0.99 / peak), x * (0.99 / peak)
    uid = f"mix{i:05d}"
    write_wav(out_dir / "noisy" / f"{uid}.wav", y, dist.sample_rate, dist.wav_format)
    write_wav(out_dir / "clean" / f"{uid}.wav", x, dist.sample_rate, dist.wav_format)
    txt = clean_path.with_suffix(".txt")
    text = txt.read_text(encoding="utf-8").strip() if txt.exists() else None
    return {
        "id": uid,
        "noisy_path": f"noisy/{uid}.wav",
        "clean_path": f"clean/{uid}.wav",
        "text": text,
        "duration_s": len(y) / dist.sample_rate,
        "rsnr_db": rsnr,
        "t60_s": t60,
        "seed": iseed,
    }


def build_dataset(clean_dir, noise_dir, dist: MixtureDistribution, out_dir, jobs: int = 1):
    """Simulate ``dist.n_items`` mixtures; writes WAVs and ``manifest.jsonl``.

    Paths in the manifest are relative to ``out_dir``.  Each item draws from its
    own RNG stream seeded by ``(dist.seed, index)``, so output does not depend
    on ``jobs``.
    """
    clean_files, noise_files = _list_wavs(clean_dir), _list_wavs(noise_dir)
    out_dir = Path(out_dir)
    (out_dir / "noisy").mkdir(parents=True, exist_ok=True)
    (out_dir / "clean").mkdir(parents=True, exist_ok=True)

    def work(i):
        return _make_item(i, clean_files, noise_files, dist, out_dir)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            items = list(ex.map(work, range(dist.n_items)))
    else:
        items = [work(i) for i in range(dist.n_items)]
    write_manifest(out_dir / "manifest.jsonl", items)
    return items


def write_manifest(path, items):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for it in items:
            fh.write(json.dumps(it, sort_keys=True, ensure_ascii=False) + "\n")


def read_manifest(path):
    """Load a JSON-lines manifest; relative paths are resolved against its directory."""
    base = os.path.dirname(os.path.abspath(path))
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                it = json.loads(line)
                for key in ("noisy_path", "clean_path"):
                    if it.get(key) and not os.path.isabs(it[key]):
                        it[key] = os.path.join(base, it[key])
                items.append(it)
    return items
