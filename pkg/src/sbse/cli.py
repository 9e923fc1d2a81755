"""Command-line entry point: ``sbse {simulate,train,enhance,evaluate}``.

Exit codes: 0 success, 2 partial result (missing files), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as C
from .checkpoint import Checkpoint, identity_checkpoint, load_checkpoint, save_checkpoint
from .datasim import build_dataset, make_toy_sources, read_manifest
from .denoiser import ConvDenoiser, init_params
from .enhance import enhance_waveform
from .metrics import aggregate, format_table, si_sdr, write_report_csv
from .trainer import train, write_log
from .wavio import read_wav, write_wav

log = logging.getLogger("sbse")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2


class JsonLinesFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname, "logger": record.name, "msg": record.getMessage()})


def _setup_logging(json_logs: bool, verbose: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLinesFormatter() if json_logs else logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _load_cfg(args, extra: dict | None = None):
    overrides = list(args.set or [])
    cfg = C.load_config(args.config, overrides)
    if extra:
        unknown = sorted(set(extra) - set(C.DEFAULTS))
        if unknown:
            raise C.ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update({k: v for k, v in extra.items() if v is not None})
    return cfg


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args, {"data.seed": args.seed, "data.n_items": args.n_items})
    out = Path(args.out)
    clean_dir, noise_dir = args.clean_dir, args.noise_dir
    if args.toy:
        clean_dir, noise_dir = make_toy_sources(
            out / "sources", int(cfg["data.toy_clean"]), int(cfg["data.toy_noise"]),
            float(cfg["data.toy_duration_s"]), int(cfg["data.sample_rate"]), int(cfg["data.seed"]))
    if clean_dir is None or noise_dir is None:
        raise ValueError("simulate needs --clean-dir and --noise-dir, or --toy")
    items = build_dataset(clean_dir, noise_dir, C.data_from(cfg), out, jobs=args.jobs)
    C.write_snapshot(cfg, out)
    log.info("wrote %d mixtures to %s", len(items), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _load_pairs(manifest, sample_rate):
    pairs = []
    for it in read_manifest(manifest):
        noisy, _ = read_wav(it["noisy_path"], sample_rate)
        clean, _ = read_wav(it["clean_path"], sample_rate)
        pairs.append((noisy, clean))
    return pairs


def cmd_train(args) -> int:
    cfg = _load_cfg(args, {"train.seed": args.seed, "train.mode": args.mode, "train.max_steps": args.max_steps})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    C.write_snapshot(cfg, out)
    if args.identity:
        save_checkpoint(out / "best.ckpt", identity_checkpoint())
        log.info("wrote identity debug checkpoint")
        return EXIT_OK
    if args.manifest is None:
        raise ValueError("train needs --manifest (or --identity)")
    sr = int(cfg["data.sample_rate"])
    tcfg = C.train_from(cfg)
    arch = C.arch_from(cfg)
    pairs = _load_pairs(args.manifest, sr)
    val_pairs = _load_pairs(args.val_manifest, sr)[: int(cfg["train.val_items"])] if args.val_manifest else None
    params = init_params(arch, np.random.default_rng(int(cfg["model.init_seed"])), tcfg.mode)
    model = ConvDenoiser(arch, params, mode=tcfg.mode, compute_dtype=np.dtype(cfg["model.compute_dtype"]))
    result = train(model, pairs, tcfg, C.schedule_from(cfg), C.stft_from(cfg), val_pairs=val_pairs)
    st = result.state
    last = Checkpoint("conv_net", model.mode, arch, model.params.copy(), st.ema.shadow_params.copy(), st.step)
    save_checkpoint(out / "last.ckpt", last)
    best = result.best.checkpoint if result.best is not None else last
    save_checkpoint(out / "best.ckpt", best)
    write_log(out / "train_log.csv", result.log_rows)
    if result.records:
        with open(out / "validation.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "mean_si_sdr_db"])
            for r in result.records:
                w.writerow([r.step, repr(r.mean_score)])
    log.info("trained %d steps; selected checkpoint at step %d", st.step, best.step)
    return EXIT_OK


# ---------------------------------------------------------------------------
# enhance
# ---------------------------------------------------------------------------


def cmd_enhance(args) -> int:
    cfg = _load_cfg(args, {"sampler.kind": args.sampler, "sampler.steps": args.steps, "sampler.seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    C.write_snapshot(cfg, out)
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise ValueError(f"unreadable checkpoint {args.checkpoint}: {exc}") from exc
    if ckpt.arch is not None and ckpt.arch != C.arch_from(cfg):
        raise ValueError(f"checkpoint arch {ckpt.arch} does not match config {C.arch_from(cfg)}")
    model = ckpt.model(use_ema=not args.no_ema, compute_dtype=np.dtype(cfg["model.compute_dtype"]))
    sr = int(cfg["data.sample_rate"])
    scfg, sched, stft = C.sampler_from(cfg), C.schedule_from(cfg), C.stft_from(cfg)

    if args.manifest:
        jobs = [(it["id"], it["noisy_path"], it.get("clean_path")) for it in read_manifest(args.manifest)]
    else:
        jobs = [(Path(p).stem, p, None) for p in args.inputs]
    if not jobs:
        raise ValueError("nothing to enhance: pass --manifest or input WAV files")
    missing = []

    def work(job):
        uid, noisy_path, clean_path = job
        if not Path(noisy_path).exists():
            return uid, None, None
        noisy, _ = read_wav(noisy_path, sr)
        enhanced = enhance_waveform(noisy, model, scfg, sched, stft)
        write_wav(out / f"{uid}.enhanced.wav", enhanced, sr)
        score = None
        if clean_path and Path(clean_path).exists():
            clean, _ = read_wav(clean_path, sr)
            score = si_sdr(clean, enhanced).value_db
        return uid, enhanced, score

    # SDE runs use the configured seed per file, so results do not depend on --jobs.
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    rows = []
    for uid, enhanced, score in results:
        if enhanced is None:
            missing.append(uid)
            log.warning("missing input for %s", uid)
        elif score is not None:
            rows.append((uid, score))
    if rows:
        with open(out / "si_sdr.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "si_sdr_db"])
            for uid, v in rows:
                w.writerow([uid, repr(v) if math.isfinite(v) else str(v)])
    log.info("enhanced %d files into %s", len(results) - len(missing), out)
    return EXIT_PARTIAL if missing else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _read_hyps(path):
    hyps = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                it = json.loads(line)
                key = it.get("id") or Path(it["noisy_path"]).stem
                hyps[key] = it["hyp_text"]
    return hyps


def _split_named(spec):
    if "=" not in spec:
        raise ValueError(f"expected NAME=PATH, got {spec!r}")
    name, path = spec.split("=", 1)
    return name, path


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    C.write_snapshot(cfg, out)
    refs = read_manifest(args.ref_manifest)
    ref_ids = [it["id"] for it in refs]
    sr = int(cfg["data.sample_rate"])
    systems = {}
    names = []
    for spec in args.hyp or []:
        names.append(_split_named(spec)[0])
    for spec in args.audio or []:
        names.append(_split_named(spec)[0])
    hyp_specs = dict(_split_named(s) for s in (args.hyp or []))
    audio_specs = dict(_split_named(s) for s in (args.audio or []))
    partial = False
    for name in dict.fromkeys(names):
        missing = []
        wer_items, sdr_items = [], []
        if name in hyp_specs:
            hyps = _read_hyps(hyp_specs[name])
            extra = sorted(set(hyps) - set(ref_ids))
            if extra:
                log.warning("%s: hypothesis ids not in reference manifest: %s", name, ", ".join(extra))
            for it in refs:
                if it["id"] not in hyps:
                    missing.append(f"{it['id']} (hyp)")
                elif it.get("text"):
                    wer_items.append((it["id"], it["text"], hyps[it["id"]]))
        if name in audio_specs:
            src = audio_specs[name]
            for it in refs:
                if src == "noisy":
                    path = Path(it["noisy_path"])
                else:
                    path = Path(src) / f"{it['id']}.enhanced.wav"
                    if not path.exists():
                        path = Path(src) / f"{it['id']}.wav"
                if not path.exists():
                    missing.append(f"{it['id']} ({path})")
                    continue
                est, _ = read_wav(path, sr)
                clean, _ = read_wav(it["clean_path"], sr)
                sdr_items.append((it["id"], si_sdr(clean, est).value_db))
        for m in missing:
            log.warning("%s: missing %s", name, m)
        partial = partial or bool(missing)
        systems[name] = aggregate(wer_items, sdr_items, missing)
    if not systems:
        raise ValueError("evaluate needs at least one --hyp NAME=FILE or --audio NAME=DIR")
    write_report_csv(out / "report.csv", systems)
    table = format_table(systems)
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_PARTIAL if partial else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="sbse", description=__doc__.splitlines()[0])
    p.add_argument("--json-logs", action="store_true", help="JSON-lines diagnostics on stderr")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("simulate", help="simulate far-field mixtures")
    common(sp)
    sp.add_argument("--clean-dir")
    sp.add_argument("--noise-dir")
    sp.add_argument("--toy", action="store_true", help="generate toy harmonic sources first")
    sp.add_argument("--n-items", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="train a bridge or predictive model")
    common(sp)
    sp.add_argument("--manifest")
    sp.add_argument("--val-manifest")
    sp.add_argument("--mode", choices=["bridge", "predictive"])
    sp.add_argument("--max-steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--identity", action="store_true", help="write an identity debug checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("enhance", help="enhance noisy WAV files")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--manifest")
    sp.add_argument("inputs", nargs="*")
    sp.add_argument("--sampler", choices=["sde", "ode"])
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-ema", action="store_true", help="use raw instead of EMA weights")
    sp.set_defaults(func=cmd_enhance)

    sp = sub.add_parser("evaluate", help="WER and SI-SDR reports")
    common(sp)
    sp.add_argument("--ref-manifest", required=True)
    sp.add_argument("--hyp", action="append", metavar="NAME=FILE", help="hypothesis JSON-lines for a system")
    sp.add_argument("--audio", action="append", metavar="NAME=DIR",
                    help="directory of <id>.enhanced.wav for a system, or NAME=noisy")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.json_logs, args.verbose)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - top-level exit-code mapping
        log.error("%s: %s", type(exc).__name__, exc)
        if args.verbose:
            raise
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
