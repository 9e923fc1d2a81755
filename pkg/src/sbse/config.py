"""Run configuration: a flat ``section.key = value`` file plus overrides.

Values are parsed as JSON where possible (numbers, ``true``/``false``,
``null``, quoted strings, lists) and kept as bare strings otherwise.  Lines
starting with ``#`` are comments.  Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

DEFAULTS = {
    "schedule.k": 2.6,
    "schedule.c": 0.40,
    "stft.window_len": 510,
    "stft.hop": 128,
    "stft.a": 0.5,
    "stft.b": 0.33,
    "sampler.kind": "ode",
    "sampler.steps": 10,
    "sampler.seed": 0,
    "model.channels": 32,
    "model.depth": 4,
    "model.time_embed_dim": 32,
    "model.compute_dtype": "float32",
    "model.init_seed": 0,
    "train.mode": "bridge",
    "train.lam": 1e-3,
    "train.lr": 1e-4,
    "train.ema_decay": 0.999,
    "train.batch_size": 8,
    "train.max_epochs": 200,
    "train.max_steps": None,
    "train.segment_frames": 256,
    "train.seed": 0,
    "train.t_min": 0.01,
    "train.adam_beta1": 0.9,
    "train.adam_beta2": 0.999,
    "train.adam_eps": 1e-8,
    "train.eval_every": 0,
    "train.val_steps": 10,
    "train.val_sampler": "ode",
    "train.val_items": 50,
    "data.n_items": 100,
    "data.rsnr_min": -5.0,
    "data.rsnr_max": 20.0,
    "data.t60_min": 0.1,
    "data.t60_max": 0.5,
    "data.drr_db": 10.0,
    "data.sample_rate": 16000,
    "data.seed": 0,
    "data.wav_format": "float32",
    "data.toy_clean": 200,
    "data.toy_noise": 40,
    "data.toy_duration_s": 1.0,
}


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_lines(lines, source="<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides`` (dict or 'k=v' strings)."""
    cfg = copy.deepcopy(DEFAULTS)
    layers = []
    if path is not None:
        layers.append(parse_lines(Path(path).read_text(encoding="utf-8").splitlines(), str(path)))
    if overrides:
        if isinstance(overrides, dict):
            layers.append(dict(overrides))
        else:
            layers.append(parse_lines(overrides, "<overrides>"))
    for layer in layers:
        unknown = sorted(set(layer) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(layer)
    return cfg


def dump_config(cfg: dict) -> str:
    return "".join(f"{k} = {json.dumps(cfg[k])}\n" for k in sorted(cfg))


def write_snapshot(cfg: dict, out_dir, seeds: dict | None = None):
    """Write ``config.resolved`` and ``seeds.json``; the pair reproduces the run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(dump_config(cfg), encoding="utf-8")
    if seeds is None:
        seeds = {k: v for k, v in cfg.items() if k.endswith("seed")}
    (out_dir / "seeds.json").write_text(json.dumps(seeds, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def section(cfg: dict, name: str) -> dict:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}


# -- typed views ---------------------------------------------------------------


def schedule_from(cfg):
    from .schedule import BridgeSchedule
    s = section(cfg, "schedule")
    return BridgeSchedule(k=float(s["k"]), c=float(s["c"]))


def stft_from(cfg):
    from .transform import StftParams
    s = section(cfg, "stft")
    return StftParams(int(s["window_len"]), int(s["hop"]), float(s["a"]), float(s["b"]))


def sampler_from(cfg):
    from .sampler import SamplerConfig
    s = section(cfg, "sampler")
    return SamplerConfig(str(s["kind"]), int(s["steps"]), int(s["seed"]))


def arch_from(cfg):
    from .denoiser import ConvArch
    s = section(cfg, "model")
    return ConvArch(int(s["channels"]), int(s["depth"]), int(s["time_embed_dim"]))


def train_from(cfg):
    from .trainer import TrainConfig
    s = section(cfg, "train")
    s.pop("val_items")
    return TrainConfig(**s)


def data_from(cfg):
    from .datasim import MixtureDistribution
    s = section(cfg, "data")
    return MixtureDistribution(
        n_items=int(s["n_items"]),
        rsnr_db=(float(s["rsnr_min"]), float(s["rsnr_max"])),
        t60_s=(float(s["t60_min"]), float(s["t60_max"])),
        drr_db=float(s["drr_db"]),
        sample_rate=int(s["sample_rate"]),
        seed=int(s["seed"]),
        wav_format=str(s["wav_format"]),
    )
