"""Compressed STFT analysis/synthesis and the synthesis adjoint.

The analysis transform maps a waveform to ``b * |STFT|**a * exp(j*angle(STFT))``.
Synthesis undoes the compression and applies a least-squares overlap-add
inverse STFT.  ``synthesize_adjoint`` backpropagates a waveform gradient to
the real and imaginary parts of the compressed spectrogram.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

EPS_MAG = 1e-8


@dataclass(frozen=True)
class StftParams:
    """STFT framing and magnitude-compression settings."""

    window_len: int = 510
    hop: int = 128
    a: float = 0.5
    b: float = 0.33

    def __post_init__(self):
        if self.window_len < 2 or self.window_len % 2:
            raise ValueError(f"window_len must be even and >= 2, got {self.window_len}")
        if not 0 < self.hop <= self.window_len:
            raise ValueError(f"need 0 < hop <= window_len, got hop={self.hop}")
        if not 0 < self.a <= 1:
            raise ValueError(f"compression exponent a must be in (0, 1], got {self.a}")
        if not self.b > 0:
            raise ValueError(f"scale b must be positive, got {self.b}")
        _check_nola(self.window, self.hop)

    @property
    def window(self) -> np.ndarray:
        return get_window("hann", self.window_len, fftbins=True)

    @property
    def n_freqs(self) -> int:
        return self.window_len // 2 + 1

    @property
    def pad(self) -> int:
        return self.window_len // 2

    def n_frames(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop

    def max_length(self, n_frames: int) -> int:
        """Longest waveform that ``n_frames`` frames reconstruct."""
        return (n_frames - 1) * self.hop + self.hop - 1


@dataclass
class Spectrogram:
    """Compressed complex spectrogram, ``n_freqs x n_frames``."""

    bins: np.ndarray
    params: StftParams = field(default_factory=StftParams)

    def __post_init__(self):
        self.bins = np.asarray(self.bins)
        if self.bins.ndim != 2 or self.bins.shape[0] != self.params.n_freqs:
            raise ValueError(
                f"expected {self.params.n_freqs} frequency rows, got shape {self.bins.shape}"
            )

    @property
    def shape(self):
        return self.bins.shape


def _check_nola(window, hop):
    n = len(window)
    wss = _window_sumsquare(window, hop, n_frames=2 * int(np.ceil(n / hop)) + 1)
    # Steady-state region: every sample there is covered by the maximum number of frames.
    if np.min(wss[n:-n]) <= 1e-10:
        raise ValueError("window/hop combination violates the nonzero overlap-add condition")


def _window_sumsquare(window, hop, n_frames):
    n = len(window)
    out = np.zeros(n + hop * (n_frames - 1))
    w2 = window**2
    for i in range(n_frames):
        out[i * hop: i * hop + n] += w2
    return out


def _frames(x, params: StftParams):
    n = params.window_len
    padded = np.pad(x, params.pad, mode="reflect")
    n_frames = params.n_frames(len(x))
    need = (n_frames - 1) * params.hop + n
    if len(padded) < need:
        padded = np.pad(padded, (0, need - len(padded)))
    view = np.lib.stride_tricks.sliding_window_view(padded, n)[:: params.hop]
    return view[:n_frames]


def stft(x, params: StftParams) -> np.ndarray:
    """Plain (uncompressed) centered STFT, ``n_freqs x n_frames``."""
    x = np.asarray(x, dtype=float)
    return np.fft.rfft(_frames(x, params) * params.window, axis=-1).T


def istft(stft_matrix, params: StftParams, out_len: int) -> np.ndarray:
    """Least-squares overlap-add inverse of :func:`stft`."""
    stft_matrix = np.asarray(stft_matrix)
    n_frames = stft_matrix.shape[1]
    if out_len > params.max_length(n_frames):
        raise ValueError(
            f"out_len={out_len} exceeds reconstructable length {params.max_length(n_frames)}"
        )
    n, hop = params.window_len, params.hop
    frames = np.fft.irfft(stft_matrix.T, n=n, axis=-1) * params.window
    full = _overlap_add(frames, hop)
    wss = _window_sumsquare(params.window, hop, n_frames)
    seg = slice(params.pad, params.pad + out_len)
    denom = wss[seg]
    if np.any(denom <= 1e-10):
        raise ValueError("zero overlap-add normalization in the output range")
    return full[seg] / denom


def _overlap_add(frames, hop):
    n_frames, n = frames.shape
    out = np.zeros(n + hop * (n_frames - 1), dtype=frames.dtype)
    for i in range(n_frames):
        out[i * hop: i * hop + n] += frames[i]
    return out


def istft_adjoint(grad_wave, params: StftParams, n_frames: int) -> np.ndarray:
    """Transpose of :func:`istft` as a real-linear map.

    Returns the complex gradient ``dL/dRe + 1j*dL/dIm`` with respect to the
    STFT coefficients, given ``dL/dwaveform``.
    """
    grad_wave = np.asarray(grad_wave, dtype=float)
    n, hop = params.window_len, params.hop
    wss = _window_sumsquare(params.window, hop, n_frames)
    full = np.zeros(n + hop * (n_frames - 1))
    seg = slice(params.pad, params.pad + len(grad_wave))
    full[seg] = grad_wave / wss[seg]
    framed = np.lib.stride_tricks.sliding_window_view(full, n)[::hop][:n_frames]
    g = np.fft.rfft(framed * params.window, axis=-1) / n
    # irfft weights interior bins twice and drops Im of the DC/Nyquist bins.
    g[:, 1:-1] *= 2
    g[:, 0] = g[:, 0].real
    g[:, -1] = g[:, -1].real
    return g.T


def compress(stft_matrix, params: StftParams) -> np.ndarray:
    mag = np.abs(stft_matrix)
    phase = np.exp(1j * np.angle(stft_matrix))
    return params.b * mag**params.a * phase


def decompress(bins, params: StftParams) -> np.ndarray:
    mag = np.abs(bins)
    phase = np.exp(1j * np.angle(bins))
    return (mag / params.b) ** (1.0 / params.a) * phase


def analyze(w, params: StftParams | None = None) -> Spectrogram:
    """Compressed spectrogram of a mono waveform."""
    params = params or StftParams()
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("analyze expects a non-empty 1-D waveform")
    if not np.all(np.isfinite(w)):
        raise ValueError("waveform contains non-finite samples")
    return Spectrogram(compress(stft(w, params), params), params)


def synthesize(s: Spectrogram | np.ndarray, out_len: int, params: StftParams | None = None) -> np.ndarray:
    """Waveform of length ``out_len`` from a compressed spectrogram.

    ``s`` may be a :class:`Spectrogram` or a bare complex array; in the latter
    case ``params`` is required.
    """
    bins, params = _resolve(s, params)
    return istft(decompress(bins, params), params, out_len)


def synthesize_linearized(s, direction, out_len: int, params: StftParams | None = None) -> np.ndarray:
    """Directional derivative of :func:`synthesize` at ``s`` along ``direction``."""
    bins, params = _resolve(s, params)
    d = np.asarray(direction)
    p = 1.0 / params.a - 1.0
    beta = params.b ** (-1.0 / params.a)
    r = np.maximum(np.abs(bins), EPS_MAG)
    dr = np.real(np.conj(bins) * d) / r
    ds = beta * (r**p * d + p * r ** (p - 1) * bins * dr)
    return istft(ds, params, out_len)


def synthesize_adjoint(s, cotangent, params: StftParams | None = None) -> np.ndarray:
    """Gradient with respect to the spectrogram given ``dL/dwaveform``.

    The result is complex: real part is ``dL/dRe(bins)``, imaginary part is
    ``dL/dIm(bins)``.  The decompression Jacobian uses a magnitude floor of
    ``EPS_MAG``.
    """
    bins, params = _resolve(s, params)
    g_stft = istft_adjoint(cotangent, params, bins.shape[1])
    p = 1.0 / params.a - 1.0
    beta = params.b ** (-1.0 / params.a)
    r = np.maximum(np.abs(bins), EPS_MAG)
    proj = np.real(np.conj(g_stft) * bins)
    return beta * (r**p * g_stft + p * r ** (p - 2) * proj * bins)


def _resolve(s, params):
    if isinstance(s, Spectrogram):
        if params is not None and params != s.params:
            raise ValueError("compression params inconsistent with spectrogram metadata")
        return s.bins, s.params
    if params is None:
        raise ValueError("params required when passing a bare array")
    bins = np.asarray(s)
    if bins.ndim != 2 or bins.shape[0] != params.n_freqs:
        raise ValueError(f"expected {params.n_freqs} frequency rows, got shape {bins.shape}")
    return bins, params
