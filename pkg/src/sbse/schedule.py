"""Variance-exploding bridge schedule between clean and noisy spectrograms.

The reference process is ``dx = g(t) dW`` with ``g(t) = sqrt(c) * k**t``, so
``alpha_t = 1`` and ``sigma_t**2 = c * (k**(2t) - 1) / (2 ln k)``.  The bridge
marginal at time ``t`` given endpoints ``x`` (t=0) and ``y`` (t=T) is Gaussian with
mean ``(sigma_bar_t**2 x + sigma_t**2 y) / sigma_T**2`` and variance
``sigma_t**2 sigma_bar_t**2 / sigma_T**2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BridgeSchedule:
    k: float = 2.6
    c: float = 0.40
    T: float = 1.0

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError(f"schedule base k must exceed 1, got {self.k}")
        if not self.c > 0:
            raise ValueError(f"schedule scale c must be positive, got {self.c}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")

    def g(self, t):
        return np.sqrt(self.c) * self.k ** np.asarray(t, dtype=float)

    def sigma2(self, t):
        """Accumulated variance ``int_0^t g(s)**2 ds``."""
        t = np.asarray(t, dtype=float)
        return self.c * np.expm1(2.0 * t * np.log(self.k)) / (2.0 * np.log(self.k))

    @property
    def sigma_T2(self) -> float:
        return float(self.sigma2(self.T))

    def alpha(self, t):
        return np.ones_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ScheduleCoeffs:
    alpha_t: float
    sigma_t: float
    sigma_bar_t: float
    sigma_T: float
    alpha_T: float = 1.0


def _check_time(sched, t):
    if not 0.0 <= t <= sched.T:
        raise ValueError(f"t={t} outside [0, {sched.T}]")


def coeffs(sched: BridgeSchedule, t: float) -> ScheduleCoeffs:
    _check_time(sched, t)
    s2 = float(sched.sigma2(t))
    sT2 = sched.sigma_T2
    # At t == T the difference is exactly zero; clamp rounding below zero.
    sbar2 = 0.0 if t == sched.T else max(sT2 - s2, 0.0)
    return ScheduleCoeffs(
        alpha_t=1.0,
        sigma_t=np.sqrt(s2),
        sigma_bar_t=np.sqrt(sbar2),
        sigma_T=np.sqrt(sT2),
    )


def marginal_weights(sched: BridgeSchedule, t: float) -> tuple[float, float, float]:
    """Return ``(weight_on_x, weight_on_y, variance)`` of the marginal at ``t``."""
    cf = coeffs(sched, t)
    sT2 = cf.sigma_T**2
    wx = cf.alpha_t * cf.sigma_bar_t**2 / sT2
    wy = cf.alpha_t * cf.sigma_t**2 / (sT2 * cf.alpha_T)
    var = cf.alpha_t**2 * cf.sigma_t**2 * cf.sigma_bar_t**2 / sT2
    return wx, wy, var


def marginal_params(sched: BridgeSchedule, x, y, t: float):
    """Mean and per-coefficient variance of the bridge marginal at ``t``."""
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs y {y.shape}")
    wx, wy, var = marginal_weights(sched, t)
    if t == 0.0:
        return x.copy(), 0.0
    if t == sched.T:
        return y.copy(), 0.0
    return wx * x + wy * y, var


def standard_noise(rng: np.random.Generator, shape, complex_valued: bool) -> np.ndarray:
    """Unit-variance Gaussian draws; complex draws have Re, Im ~ N(0, 1/2)."""
    if complex_valued:
        z = rng.standard_normal(tuple(shape) + (2,)) * np.sqrt(0.5)
        return z[..., 0] + 1j * z[..., 1]
    return rng.standard_normal(shape)


def _noise_like(ref, rng, noise):
    if noise is not None:
        noise = np.asarray(noise)
        if noise.shape != np.shape(ref):
            raise ValueError(f"noise shape {noise.shape} does not match {np.shape(ref)}")
        return noise
    if rng is None:
        raise ValueError("either rng or an explicit noise array is required")
    return standard_noise(rng, np.shape(ref), np.iscomplexobj(ref))


def sample_marginal(sched: BridgeSchedule, x, y, t: float, rng=None, noise=None):
    """Draw ``x_t ~ p_t(. | x, y)``.  ``noise`` overrides draws from ``rng``."""
    mean, var = marginal_params(sched, x, y, t)
    if var == 0.0:
        return mean
    z = _noise_like(mean, rng, noise)
    return mean + np.sqrt(var) * z


def simulate_forward_em(sched: BridgeSchedule, x0, n_steps: int, rng=None, noise=None,
                        g_eval: str = "midpoint"):
    """Euler-Maruyama integration of ``dx = g(t) dW`` from 0 to T.

    ``noise``, if given, has shape ``(n_steps,) + x0.shape``.  The diffusion
    coefficient is sampled at each step's midpoint by default (``g_eval="left"``
    gives the textbook left-point rule, whose variance is O(dt) low).  Used as an
    independent check of the closed-form variance.
    """
    if g_eval not in ("midpoint", "left"):
        raise ValueError(f"g_eval must be 'midpoint' or 'left', got {g_eval!r}")
    offset = 0.5 if g_eval == "midpoint" else 0.0
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.array(x0, dtype=np.result_type(np.asarray(x0), float), copy=True)
    dt = sched.T / n_steps
    if noise is not None:
        noise = np.asarray(noise)
        if noise.shape != (n_steps,) + x.shape:
            raise ValueError(f"noise must have shape {(n_steps,) + x.shape}")
    for i in range(n_steps):
        z = noise[i] if noise is not None else standard_noise(rng, x.shape, np.iscomplexobj(x))
        x = x + sched.g((i + offset) * dt) * np.sqrt(dt) * z
    return x
