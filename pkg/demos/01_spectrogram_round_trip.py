"""
Compressed spectrogram round trip
=================================

Analyze a waveform into the compressed complex spectrogram the models work
on, look at what the compression does, and synthesize it back.
"""

import numpy as np

from sbse.transform import StftParams, analyze, stft, synthesize

# 510-sample Hann window, hop 128: 256 frequency rows per frame.
params = StftParams(window_len=510, hop=128, a=0.5, b=0.33)
rng = np.random.default_rng(0)
t = np.arange(16000) / 16000
w = 0.4 * np.sin(2 * np.pi * 440 * t) + 0.05 * rng.standard_normal(t.size)

s = analyze(w, params)
print("spectrogram shape (F, N):", s.shape)

# Compression flattens the dynamic range: amplitude exponent 0.5 halves it in dB.
raw = np.abs(stft(w, params))
comp = np.abs(s.bins)
print("raw dynamic range  %.1f dB" % (20 * np.log10(raw.max() / np.median(raw))))
print("compressed range   %.1f dB" % (20 * np.log10(comp.max() / np.median(comp))))

# Inverting undoes the compression, then runs least-squares overlap-add.
back = synthesize(s, len(w))
print("round-trip max error: %.2e" % np.max(np.abs(back - w)))
