"""Denoisers ``x_hat = d(x_t, y, t)`` used by the bridge samplers and trainer.

Three kinds share the ``denoise(x_t, y, t)`` interface:

* :class:`IdentityDenoiser` returns ``x_t`` (sampler fixed-point checks).
* :class:`GaussianOracleDenoiser` returns the exact posterior mean on a
  scalar Gaussian toy problem.
* :class:`ConvDenoiser` is a small time-conditioned convolutional network with
  hand-written backpropagation.

Complex spectrograms enter the network as stacked real/imag channels
``(Re x_t, Im x_t, Re y, Im y)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .schedule import BridgeSchedule, marginal_weights


class IdentityDenoiser:
    kind = "identity"
    mode = "bridge"

    def denoise(self, x_t, y, t):
        x_t = np.asarray(x_t)
        if x_t.shape != np.shape(y):
            raise ValueError(f"shape mismatch: {x_t.shape} vs {np.shape(y)}")
        return x_t.copy()


@dataclass(frozen=True)
class GaussianToyProblem:
    """``x ~ N(0, prior_var)``, ``y = x + n`` with ``n ~ N(0, noise_var)``, per coefficient."""

    prior_var: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not (self.prior_var > 0 and self.noise_var > 0):
            raise ValueError("prior_var and noise_var must be positive")

    def posterior_given_y(self, y):
        gain = self.prior_var / (self.prior_var + self.noise_var)
        var = self.prior_var * self.noise_var / (self.prior_var + self.noise_var)
        return gain * np.asarray(y), var


class GaussianOracleDenoiser:
    """Exact ``E[x | x_t, y]`` for :class:`GaussianToyProblem`.

    Given ``y``, ``x`` is Gaussian with mean ``m`` and variance ``v``; the bridge
    state is ``x_t = wx*x + wy*y + sqrt(var_t)*z``, a linear observation of ``x``.
    """

    kind = "gaussian_oracle"
    mode = "bridge"

    def __init__(self, problem: GaussianToyProblem, sched: BridgeSchedule | None = None):
        self.problem = problem
        self.sched = sched or BridgeSchedule()

    def denoise(self, x_t, y, t):
        x_t, y = np.asarray(x_t), np.asarray(y)
        if x_t.shape != y.shape:
            raise ValueError(f"shape mismatch: {x_t.shape} vs {y.shape}")
        m, v = self.problem.posterior_given_y(y)
        wx, wy, var_t = marginal_weights(self.sched, t)
        denom = wx**2 * v + var_t
        if denom == 0.0:
            return m
        obs = x_t - wy * y
        return m + v * wx * (obs - wx * m) / denom


# ---------------------------------------------------------------------------
# Convolutional network
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvArch:
    channels: int = 32
    depth: int = 4
    time_embed_dim: int = 32
    in_channels: int = 4
    out_channels: int = 2

    def __post_init__(self):
        if self.depth < 1 or self.channels < 1:
            raise ValueError("depth and channels must be >= 1")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even and >= 2")

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        C, E = self.channels, self.time_embed_dim
        shapes = []
        for layer in range(self.depth):
            cin = self.in_channels if layer == 0 else C
            shapes.append((f"conv{layer}.w", (3, 3, cin, C)))
            shapes.append((f"conv{layer}.b", (C,)))
        shapes.append(("time.w", (E, C)))
        shapes.append(("time.b", (C,)))
        shapes.append(("out.w", (C, self.out_channels)))
        shapes.append(("out.b", (self.out_channels,)))
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes())

    def to_dict(self):
        return {
            "channels": self.channels,
            "depth": self.depth,
            "time_embed_dim": self.time_embed_dim,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
        }


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features of ``t`` in [0, 1]; geometric frequencies 0.5..64 cycles."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    freqs = np.geomspace(0.5, 64.0, dim // 2)
    ang = 2 * np.pi * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def unpack(arch: ConvArch, flat: np.ndarray) -> dict[str, np.ndarray]:
    """Named views into a flat parameter vector (no copies)."""
    if flat.ndim != 1 or flat.size != arch.n_params:
        raise ValueError(f"parameter vector has {flat.size} entries, arch needs {arch.n_params}")
    out, i = {}, 0
    for name, shape in arch.param_shapes():
        n = int(np.prod(shape))
        out[name] = flat[i: i + n].reshape(shape)
        i += n
    return out


def init_params(arch: ConvArch, rng: np.random.Generator, mode: str = "bridge") -> np.ndarray:
    flat = np.zeros(arch.n_params)
    p = unpack(arch, flat)
    for layer in range(arch.depth):
        w = p[f"conv{layer}.w"]
        fan_in = 9 * w.shape[2]
        w[...] = rng.standard_normal(w.shape) * np.sqrt(2.0 / fan_in)
    if mode == "bridge":
        p["time.w"][...] = rng.standard_normal(p["time.w"].shape) * np.sqrt(1.0 / arch.time_embed_dim)
    return flat


def _conv3x3(x, w, b):
    """'same' 3x3 convolution, channels-last: x (B,F,N,Cin), w (3,3,Cin,Cout)."""
    B, F, N, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.empty((B, F, N, w.shape[3]), dtype=x.dtype)
    out[...] = b
    for i in range(3):
        for j in range(3):
            out += xp[:, i: i + F, j: j + N, :] @ w[i, j]
    return out, xp


def _conv3x3_backward(xp, w, gout, need_input_grad=True):
    B, F, N, cout = gout.shape
    gw = np.empty_like(w)
    for i in range(3):
        for j in range(3):
            gw[i, j] = (xp[:, i: i + F, j: j + N, :].swapaxes(-1, -2) @ gout).sum(axis=(0, 1))
    gb = gout.sum(axis=(0, 1, 2))
    gx = None
    if need_input_grad:
        # Input gradient is a 'same' convolution with the flipped, transposed kernel.
        w_adj = np.ascontiguousarray(w[::-1, ::-1].swapaxes(-1, -2))
        gx, _ = _conv3x3(gout, w_adj, np.zeros(w.shape[2], dtype=gout.dtype))
    return gw, gb, gx


@dataclass
class ForwardCache:
    x: np.ndarray
    emb: np.ndarray
    padded: list
    pre: list
    hidden_last: np.ndarray
    params_digest: str


def _digest(flat):
    return hashlib.sha1(np.ascontiguousarray(flat).tobytes()).hexdigest()


class ConvDenoiser:
    """Plain conv net: ``depth`` 3x3 ReLU layers, time bias after layer 1, 1x1 head, y skip."""

    kind = "conv_net"

    def __init__(self, arch: ConvArch | None = None, params=None, mode: str = "bridge",
                 compute_dtype=np.float64, rng=None):
        self.arch = arch or ConvArch()
        if mode not in ("bridge", "predictive"):
            raise ValueError(f"mode must be 'bridge' or 'predictive', got {mode!r}")
        self.mode = mode
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = init_params(self.arch, rng, mode)
        self.params = np.asarray(params, dtype=np.float64)
        unpack(self.arch, self.params)
        self.compute_dtype = np.dtype(compute_dtype)

    def checksum(self) -> str:
        return _digest(self.params)

    # -- real-tensor interface -------------------------------------------------

    def conv_forward(self, inputs, t, params=None, with_cache=False):
        """Forward pass on ``inputs`` of shape (4,F,N) or (B,4,F,N); returns (...,2,F,N)."""
        params = self.params if params is None else params
        inputs = np.asarray(inputs)
        squeeze = inputs.ndim == 3
        if squeeze:
            inputs = inputs[None]
        if inputs.ndim != 4 or inputs.shape[1] != self.arch.in_channels:
            raise ValueError(f"expected (B,{self.arch.in_channels},F,N) input, got {inputs.shape}")
        B = inputs.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=float), (B,))
        if self.mode == "predictive":
            t = np.zeros(B)
        dt = self.compute_dtype
        p = {k: v.astype(dt, copy=False) for k, v in unpack(self.arch, params).items()}
        x = np.ascontiguousarray(inputs.transpose(0, 2, 3, 1), dtype=dt)
        emb = time_embedding(t, self.arch.time_embed_dim).astype(dt)

        h = x
        padded, pre = [], []
        for layer in range(self.arch.depth):
            z, xp = _conv3x3(h, p[f"conv{layer}.w"], p[f"conv{layer}.b"])
            padded.append(xp)
            pre.append(z)
            h = np.maximum(z, 0)
            if layer == 0 and self.mode == "bridge":
                tb = emb @ p["time.w"] + p["time.b"]
                h = h + tb[:, None, None, :]
        out = h @ p["out.w"] + p["out.b"] + x[..., 2:4]
        out = out.transpose(0, 3, 1, 2)
        if squeeze:
            out = out[0]
        if not with_cache:
            return out
        cache = ForwardCache(x=x, emb=emb, padded=padded, pre=pre, hidden_last=h,
                             params_digest=_digest(params))
        return out, cache

    def conv_backward(self, cache: ForwardCache, out_grad, params=None, need_input_grad=False):
        """Gradient of a scalar loss w.r.t. the flat parameters given dL/d(output).

        Returns ``(param_grad, input_grad)``; ``input_grad`` is None unless requested.
        """
        params = self.params if params is None else params
        if cache.params_digest != _digest(params):
            raise ValueError("stale forward cache: parameters changed since the forward pass")
        dt = self.compute_dtype
        g = np.asarray(out_grad)
        if g.ndim == 3:
            g = g[None]
        g = np.ascontiguousarray(g.transpose(0, 2, 3, 1), dtype=dt)
        p = {k: v.astype(dt, copy=False) for k, v in unpack(self.arch, params).items()}
        grad = np.zeros(self.arch.n_params)
        gp = unpack(self.arch, grad)

        h = cache.hidden_last
        gp["out.w"][...] = h.reshape(-1, h.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gp["out.b"][...] = g.sum(axis=(0, 1, 2))
        gh = g @ p["out.w"].T
        gx_skip = g

        gx = None
        for layer in reversed(range(self.arch.depth)):
            if layer == 0 and self.mode == "bridge":
                gtb = gh.sum(axis=(1, 2))
                gp["time.w"][...] = cache.emb.T @ gtb
                gp["time.b"][...] = gtb.sum(axis=0)
            gz = gh * (cache.pre[layer] > 0)
            want_input = layer > 0 or need_input_grad
            gw, gb, gin = _conv3x3_backward(cache.padded[layer], p[f"conv{layer}.w"], gz, want_input)
            gp[f"conv{layer}.w"][...] = gw
            gp[f"conv{layer}.b"][...] = gb
            if layer > 0:
                gh = gin
            else:
                gx = gin
        input_grad = None
        if need_input_grad:
            gx = gx.copy()
            gx[..., 2:4] += gx_skip
            input_grad = gx.transpose(0, 3, 1, 2).astype(np.float64)
        return grad, input_grad

    # -- complex spectrogram interface ------------------------------------------

    def denoise(self, x_t, y, t):
        x_t, y = np.asarray(x_t), np.asarray(y)
        if x_t.shape != y.shape:
            raise ValueError(f"shape mismatch: {x_t.shape} vs {y.shape}")
        if np.any(np.asarray(t) < 0) or np.any(np.asarray(t) > 1.0):
            raise ValueError(f"t={t} outside [0, 1]")
        out = self.conv_forward(stack_inputs(x_t, y), t)
        return to_complex(out)

    def predictive_estimate(self, y):
        if self.mode != "predictive":
            raise ValueError("predictive_estimate requires a model in predictive mode")
        return to_complex(self.conv_forward(stack_inputs(y, y), 0.0))


def stack_inputs(x_t, y) -> np.ndarray:
    """Complex (…,F,N) pairs to real (…,4,F,N) channels."""
    return np.stack([x_t.real, x_t.imag, y.real, y.imag], axis=-3)


def to_complex(out) -> np.ndarray:
    return out[..., 0, :, :] + 1j * out[..., 1, :, :]


def from_complex_grad(g) -> np.ndarray:
    """Complex gradient dL/dRe + 1j dL/dIm to real (…,2,F,N) output cotangent."""
    return np.stack([g.real, g.imag], axis=-3)
