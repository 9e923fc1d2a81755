"""Reverse-time bridge samplers (stochastic and probability-flow).

Both samplers start at ``x_T = y`` and walk a uniform grid down to ``t = 0``,
calling the denoiser once per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import BridgeSchedule, coeffs, standard_noise


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    def pairs(self):
        return list(zip(self.points[:-1], self.points[1:]))


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "ode"
    n_steps: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("sde", "ode"):
            raise ValueError(f"sampler kind must be 'sde' or 'ode', got {self.kind!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


def make_grid(n_steps: int, T: float = 1.0) -> TimeGrid:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    pts = T * (1.0 - np.arange(n_steps + 1) / n_steps)
    pts[0], pts[-1] = T, 0.0
    return TimeGrid(pts)


def _check_step(sched, tau, t):
    if not 0.0 <= t < tau <= sched.T:
        raise ValueError(f"need 0 <= t < tau <= T, got tau={tau}, t={t}")


def sde_coefficients(sched: BridgeSchedule, tau: float, t: float):
    """Weights ``(on x_tau, on x_hat, on noise)`` of one stochastic step."""
    _check_step(sched, tau, t)
    ct, cs = coeffs(sched, t), coeffs(sched, tau)
    ratio = ct.sigma_t**2 / cs.sigma_t**2
    w_state = ct.alpha_t * ratio / cs.alpha_t
    w_hat = ct.alpha_t * (1.0 - ratio)
    w_noise = ct.alpha_t * ct.sigma_t * np.sqrt(max(1.0 - ratio, 0.0))
    return w_state, w_hat, w_noise


def sde_step(sched: BridgeSchedule, x_tau, x_hat, tau: float, t: float, rng=None, noise=None):
    x_tau, x_hat = np.asarray(x_tau), np.asarray(x_hat)
    if x_tau.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x_tau.shape} vs {x_hat.shape}")
    w_state, w_hat, w_noise = sde_coefficients(sched, tau, t)
    out = w_state * x_tau + w_hat * x_hat
    if w_noise == 0.0:
        return out
    if noise is None:
        if rng is None:
            raise ValueError("sde_step needs rng or explicit noise")
        noise = standard_noise(rng, x_tau.shape, np.iscomplexobj(x_tau) or np.iscomplexobj(x_hat))
    return out + w_noise * noise


def ode_coefficients(sched: BridgeSchedule, tau: float, t: float):
    """Weights ``(on x_tau, on x_hat, on y)`` of one probability-flow step.

    At ``tau == T`` the raw weights on ``x_tau`` and ``y`` are singular
    (``sigma_bar_T = 0``); with ``x_T = y`` they cancel and the step reduces to
    the marginal mean with ``x_hat`` in place of ``x``.  That case returns a
    zero ``x_tau`` weight and the merged finite ``y`` weight.
    """
    _check_step(sched, tau, t)
    ct, cs = coeffs(sched, t), coeffs(sched, tau)
    sT2 = ct.sigma_T**2
    if cs.sigma_bar_t == 0.0:
        return 0.0, ct.alpha_t * ct.sigma_bar_t**2 / sT2, ct.alpha_t * ct.sigma_t**2 / (ct.alpha_T * sT2)
    prod_t = ct.sigma_t * ct.sigma_bar_t
    w_state = ct.alpha_t * prod_t / (cs.alpha_t * cs.sigma_t * cs.sigma_bar_t)
    w_hat = ct.alpha_t / sT2 * (ct.sigma_bar_t**2 - cs.sigma_bar_t * prod_t / cs.sigma_t)
    w_y = ct.alpha_t / (ct.alpha_T * sT2) * (ct.sigma_t**2 - cs.sigma_t * prod_t / cs.sigma_bar_t)
    return w_state, w_hat, w_y


def ode_step(sched: BridgeSchedule, x_tau, x_hat, y, tau: float, t: float):
    """Deterministic step; from ``tau == T`` it assumes ``x_tau == y``."""
    x_tau, x_hat, y = np.asarray(x_tau), np.asarray(x_hat), np.asarray(y)
    if not x_tau.shape == x_hat.shape == y.shape:
        raise ValueError(f"shape mismatch: {x_tau.shape}, {x_hat.shape}, {y.shape}")
    w_state, w_hat, w_y = ode_coefficients(sched, tau, t)
    out = w_hat * x_hat + w_y * y
    if w_state != 0.0:
        out = out + w_state * x_tau
    return out


class SamplerError(RuntimeError):
    pass


def run_sampler(y, model, cfg: SamplerConfig, sched: BridgeSchedule | None = None):
    """Enhance spectrogram coefficients ``y``; returns the ``t = 0`` state.

    ``model`` is any object with ``denoise(x_t, y, t)``.
    """
    sched = sched or BridgeSchedule()
    y = np.asarray(y)
    grid = make_grid(cfg.n_steps, sched.T)
    rng = np.random.default_rng(cfg.seed) if cfg.kind == "sde" else None
    x = y.copy()
    for i, (tau, t) in enumerate(grid.pairs()):
        try:
            x_hat = model.denoise(x, y, tau)
        except Exception as exc:
            raise SamplerError(f"denoiser failed at step {i} (tau={tau:.4f}): {exc}") from exc
        if cfg.kind == "ode":
            x = ode_step(sched, x, x_hat, y, tau, t)
        else:
            x = sde_step(sched, x, x_hat, tau, t, rng=rng)
    return x
