"""Training for the bridge denoiser and the predictive baseline.

Bridge mode minimizes, per item,

    mean |x_hat - x|**2  +  lam * sum |synthesize(x_hat) - x_time|

with ``x_hat = d(x_t, y, t)``, ``t ~ U[t_min, T]`` and ``x_t`` drawn from the
bridge marginal.  Predictive mode feeds ``y`` only and minimizes the time-domain
mean squared error.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .denoiser import ConvDenoiser, from_complex_grad, stack_inputs, to_complex
from .schedule import BridgeSchedule, sample_marginal
from .transform import StftParams, analyze, synthesize, synthesize_adjoint

log = logging.getLogger(__name__)

SMOOTH_EPS = 1e-8


@dataclass
class TrainConfig:
    lam: float = 1e-3
    lr: float = 1e-4
    ema_decay: float = 0.999
    batch_size: int = 8
    max_epochs: int = 1
    max_steps: int | None = None
    segment_frames: int = 256
    seed: int = 0
    mode: str = "bridge"
    t_min: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 0
    val_steps: int = 10
    val_sampler: str = "ode"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.lr >= 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.ema_decay < 1:
            raise ValueError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.segment_frames < 1:
            raise ValueError("batch_size, max_epochs and segment_frames must be positive")
        if self.mode not in ("bridge", "predictive"):
            raise ValueError(f"mode must be 'bridge' or 'predictive', got {self.mode!r}")


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def loss_eq3(x_hat, x, x_time, lam: float, params: StftParams, smooth_eps: float = SMOOTH_EPS):
    """Data-prediction loss plus weighted smoothed l1 time-domain loss.

    Returns ``(value, grad)`` where ``grad = dL/dRe(x_hat) + 1j*dL/dIm(x_hat)``.
    The l1 term uses ``sqrt(u**2 + eps**2) - eps`` so that it is exactly zero
    at ``u = 0`` and differentiable everywhere.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    x_hat, x = np.asarray(x_hat), np.asarray(x)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x.shape}")
    diff = x_hat - x
    D = diff.size
    value = float(np.sum(np.abs(diff) ** 2) / D)
    grad = 2.0 * diff / D
    if lam > 0:
        resid = synthesize(x_hat, len(x_time), params) - x_time
        smooth = np.sqrt(resid**2 + smooth_eps**2)
        value += lam * float(np.sum(smooth - smooth_eps))
        grad = grad + lam * synthesize_adjoint(x_hat, resid / smooth, params)
    return value, grad


def time_mse_loss(x_hat, x_time, params: StftParams):
    """Time-domain mean squared error of the synthesized estimate."""
    resid = synthesize(x_hat, len(x_time), params) - x_time
    value = float(np.mean(resid**2))
    grad = synthesize_adjoint(x_hat, 2.0 * resid / resid.size, params)
    return value, grad


def batch_loss_and_grad(model: ConvDenoiser, batch, lam, stft_params, t=None, x_t=None, params=None):
    """Mean loss over a batch and its gradient w.r.t. the flat parameters.

    ``batch`` holds stacked arrays ``(x, y, x_time)``.  For bridge models ``t``
    and ``x_t`` give the per-item time and marginal sample.
    """
    x, y, x_time = batch
    B = x.shape[0]
    if model.mode == "bridge":
        inputs = stack_inputs(x_t, y)
    else:
        inputs = stack_inputs(y, y)
        t = np.zeros(B)
    out, cache = model.conv_forward(inputs, t, params=params, with_cache=True)
    x_hat = to_complex(out.astype(np.float64))
    total = 0.0
    cot = np.empty_like(x_hat)
    for i in range(B):
        if model.mode == "bridge":
            v, g = loss_eq3(x_hat[i], x[i], x_time[i], lam, stft_params)
        else:
            v, g = time_mse_loss(x_hat[i], x_time[i], stft_params)
        total += v
        cot[i] = g
    grad, _ = model.conv_backward(cache, from_complex_grad(cot) / B, params=params)
    return total / B, grad


# ---------------------------------------------------------------------------
# Optimizer and EMA
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, n_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def update(self, params, grad):
        """In-place Adam step on ``params``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EmaState:
    shadow_params: np.ndarray
    decay: float = 0.999

    def update(self, params):
        if params.shape != self.shadow_params.shape:
            raise ValueError("EMA shadow and parameters differ in length")
        self.shadow_params = self.decay * self.shadow_params + (1 - self.decay) * params


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def crop_batch(pairs, indices, cfg: TrainConfig, stft_params: StftParams, rng):
    """Random fixed-length crops, normalized by the noisy crop's peak.

    ``pairs`` is a sequence of ``(noisy, clean)`` waveforms.
    """
    seg_len = (cfg.segment_frames - 1) * stft_params.hop
    xs, ys, xts = [], [], []
    for idx in indices:
        noisy, clean = pairs[idx]
        if len(noisy) > seg_len:
            start = int(rng.integers(0, len(noisy) - seg_len + 1))
            noisy, clean = noisy[start: start + seg_len], clean[start: start + seg_len]
        else:
            noisy = np.pad(noisy, (0, seg_len - len(noisy)))
            clean = np.pad(clean, (0, seg_len - len(clean)))
        scale = np.max(np.abs(noisy))
        if scale > 0:
            noisy, clean = noisy / scale, clean / scale
        xs.append(analyze(clean, stft_params).bins)
        ys.append(analyze(noisy, stft_params).bins)
        xts.append(clean)
    return np.stack(xs), np.stack(ys), np.stack(xts)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    model: ConvDenoiser
    optimizer: Adam
    ema: EmaState
    step: int = 0


def new_train_state(model: ConvDenoiser, cfg: TrainConfig) -> TrainState:
    opt = Adam(model.params.size, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return TrainState(model, opt, EmaState(model.params.copy(), cfg.ema_decay))


def train_step(state: TrainState, batch, cfg: TrainConfig, sched: BridgeSchedule,
               stft_params: StftParams, rng):
    """One Adam update plus EMA update; returns ``(loss, grad_norm)``."""
    model = state.model
    x, y, _ = batch
    B = x.shape[0]
    t = x_t = None
    if model.mode == "bridge":
        t = rng.uniform(cfg.t_min, sched.T, size=B)
        x_t = np.stack([sample_marginal(sched, x[i], y[i], t[i], rng=rng) for i in range(B)])
    loss, grad = batch_loss_and_grad(model, batch, cfg.lam, stft_params, t=t, x_t=x_t)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise TrainingError(
            f"non-finite loss at step {state.step}: loss={loss}, t={t}, "
            f"param_norm={np.linalg.norm(model.params):.4g}"
        )
    state.optimizer.update(model.params, grad)
    state.ema.update(model.params)
    state.step += 1
    return loss, float(np.linalg.norm(grad))


@dataclass
class CheckpointRecord:
    step: int
    scores: list
    checkpoint: Checkpoint | None = None

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.scores))


def validate_and_select(records):
    """Record with the highest mean validation SI-SDR; ties go to the later step."""
    if not records:
        raise ValueError("no checkpoints to select from")
    for r in records:
        if len(r.scores) == 0:
            raise ValueError(f"empty validation set for checkpoint at step {r.step}")
    return max(records, key=lambda r: (r.mean_score, r.step))


@dataclass
class TrainResult:
    state: TrainState
    log_rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    best: CheckpointRecord | None = None


LOG_COLUMNS = ("step", "loss", "lr", "grad_norm", "wall_time")


def train(model: ConvDenoiser, train_pairs, cfg: TrainConfig, sched: BridgeSchedule | None = None,
          stft_params: StftParams | None = None, val_pairs=None, on_step=None) -> TrainResult:
    """Run the training loop; evaluates EMA weights every ``cfg.eval_every`` steps.

    ``val_pairs`` are ``(noisy, clean)`` waveforms enhanced in full with the
    ODE sampler at ``cfg.val_steps`` steps.
    """
    from .enhance import enhance_waveform
    from .metrics import si_sdr
    from .sampler import SamplerConfig

    sched = sched or BridgeSchedule()
    stft_params = stft_params or StftParams()
    if model.mode != cfg.mode:
        raise ValueError(f"model mode {model.mode!r} != config mode {cfg.mode!r}")
    if len(train_pairs) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    state = new_train_state(model, cfg)
    result = TrainResult(state)
    t0 = time.perf_counter()

    def evaluate():
        ema_model = ConvDenoiser(model.arch, state.ema.shadow_params.copy(), mode=model.mode,
                                 compute_dtype=model.compute_dtype)
        scfg = SamplerConfig(cfg.val_sampler, cfg.val_steps, cfg.seed)
        scores = [si_sdr(clean, enhance_waveform(noisy, ema_model, scfg, sched, stft_params)).value_db
                  for noisy, clean in val_pairs]
        ckpt = Checkpoint("conv_net", model.mode, model.arch, model.params.copy(),
                          state.ema.shadow_params.copy(), state.step)
        rec = CheckpointRecord(state.step, scores, ckpt)
        result.records.append(rec)
        log.info("step %d: validation SI-SDR %.3f dB", state.step, rec.mean_score)

    done = False
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_pairs))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start: start + cfg.batch_size]
            batch = crop_batch(train_pairs, idx, cfg, stft_params, rng)
            loss, gnorm = train_step(state, batch, cfg, sched, stft_params, rng)
            result.log_rows.append((state.step, loss, cfg.lr, gnorm, time.perf_counter() - t0))
            if on_step is not None:
                on_step(state, loss)
            if val_pairs and cfg.eval_every and state.step % cfg.eval_every == 0:
                evaluate()
            if cfg.max_steps is not None and state.step >= cfg.max_steps:
                done = True
                break
        if done:
            break
    if val_pairs and (not result.records or result.records[-1].step != state.step):
        evaluate()
    if result.records:
        result.best = validate_and_select(result.records)
    return result


def write_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for step, loss, lr, gnorm, wall in rows:
            w.writerow([step, repr(float(loss)), repr(float(lr)), repr(float(gnorm)), f"{wall:.3f}"])


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
