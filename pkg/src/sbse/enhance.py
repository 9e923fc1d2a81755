"""Waveform-in, waveform-out enhancement."""

from __future__ import annotations

import numpy as np

from .sampler import SamplerConfig, run_sampler
from .schedule import BridgeSchedule
from .transform import StftParams, analyze, synthesize


def enhance_waveform(noisy, model, cfg: SamplerConfig | None = None, sched: BridgeSchedule | None = None,
                     stft_params: StftParams | None = None) -> np.ndarray:
    """Peak-normalize, sample (or run the predictive model), resynthesize, restore scale."""
    cfg = cfg or SamplerConfig()
    stft_params = stft_params or StftParams()
    noisy = np.asarray(noisy, dtype=float)
    scale = np.max(np.abs(noisy))
    if scale == 0:
        return np.zeros_like(noisy)
    y = analyze(noisy / scale, stft_params).bins
    if getattr(model, "mode", "bridge") == "predictive":
        x_hat = model.predictive_estimate(y)
    else:
        x_hat = run_sampler(y, model, cfg, sched)
    return synthesize(x_hat, len(noisy), stft_params) * scale
