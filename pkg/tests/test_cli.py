import csv
import json
import math

import numpy as np
import pytest

from sbse.cli import main
from sbse.config import ConfigError, dump_config, load_config, parse_lines
from sbse.datasim import read_manifest
from sbse.wavio import read_wav

TINY_SET = [
    "model.channels=4", "model.depth=2", "model.time_embed_dim=4",
    "train.batch_size=2", "train.segment_frames=8", "train.lr=0.001",
]
TOY_SET = ["data.toy_clean=4", "data.toy_noise=2", "data.toy_duration_s=0.5"]


def _set(opts):
    out = []
    for o in opts:
        out += ["--set", o]
    return out


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["simulate", "--toy", "--n-items", "4", "--seed", "3", "--out", str(out)] + _set(TOY_SET)) == 0
    return out


def test_simulate_outputs(corpus):
    items = read_manifest(corpus / "manifest.jsonl")
    assert len(items) == 4
    assert (corpus / "config.resolved").exists()
    seeds = json.loads((corpus / "seeds.json").read_text())
    assert seeds["data.seed"] == 3


def test_identity_checkpoint_enhance(corpus, tmp_path):
    assert main(["train", "--identity", "--out", str(tmp_path / "m")]) == 0
    rc = main(["enhance", "--checkpoint", str(tmp_path / "m" / "best.ckpt"), "--manifest",
               str(corpus / "manifest.jsonl"), "--sampler", "ode", "--steps", "10", "--out", str(tmp_path / "e")])
    assert rc == 0
    for it in read_manifest(corpus / "manifest.jsonl"):
        noisy, _ = read_wav(it["noisy_path"])
        enh, _ = read_wav(tmp_path / "e" / f"{it['id']}.enhanced.wav")
        assert np.max(np.abs(enh - noisy)) <= 1e-5
    rows = list(csv.reader(open(tmp_path / "e" / "si_sdr.csv")))
    assert rows[0] == ["id", "si_sdr_db"] and len(rows) == 5


def test_train_enhance_evaluate_pipeline(corpus, tmp_path):
    rc = main(["train", "--manifest", str(corpus / "manifest.jsonl"), "--val-manifest", str(corpus / "manifest.jsonl"),
               "--max-steps", "3", "--out", str(tmp_path / "m")] + _set(TINY_SET))
    assert rc == 0
    log_rows = list(csv.reader(open(tmp_path / "m" / "train_log.csv")))
    assert log_rows[0] == ["step", "loss", "lr", "grad_norm", "wall_time"] and len(log_rows) == 4
    assert (tmp_path / "m" / "validation.csv").exists()
    rc = main(["enhance", "--checkpoint", str(tmp_path / "m" / "best.ckpt"), "--manifest",
               str(corpus / "manifest.jsonl"), "--steps", "2", "--out", str(tmp_path / "e")] + _set(TINY_SET))
    assert rc == 0
    hyp = tmp_path / "hyp.jsonl"
    refs = read_manifest(corpus / "manifest.jsonl")
    hyp.write_text("".join(json.dumps({"id": it["id"], "hyp_text": it["text"]}) + "\n" for it in refs))
    rc = main(["evaluate", "--ref-manifest", str(corpus / "manifest.jsonl"), "--hyp", f"unprocessed={hyp}",
               "--audio", "unprocessed=noisy", "--audio", f"bridge={tmp_path / 'e'}", "--out", str(tmp_path / "r")])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "r" / "report.csv")))
    assert {r["system"] for r in rows} == {"unprocessed", "bridge"}
    all_row = [r for r in rows if r["system"] == "unprocessed" and r["id"] == "ALL"][0]
    assert float(all_row["wer"]) == 0.0
    for r in rows:
        if r["wer"]:
            assert float(r["wer"]) == float(r["ins"]) + float(r["del"]) + float(r["sub"])
    assert "SI-SDR" in (tmp_path / "r" / "report.txt").read_text()


def test_evaluate_clean_as_enhanced_gives_perfect_count(corpus, tmp_path):
    rc = main(["evaluate", "--ref-manifest", str(corpus / "manifest.jsonl"),
               "--audio", f"oracle={corpus / 'clean'}", "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "report.csv")))
    assert sum(1 for r in rows if r["id"] != "ALL" and r["si_sdr_db"] == "inf") == 4
    assert [r for r in rows if r["id"] == "ALL"][0]["si_sdr_db"] == "inf"


def test_evaluate_missing_is_partial(corpus, tmp_path):
    hyp = tmp_path / "hyp.jsonl"
    refs = read_manifest(corpus / "manifest.jsonl")
    hyp.write_text(json.dumps({"id": refs[0]["id"], "hyp_text": "x"}) + "\n"
                   + json.dumps({"id": "nope", "hyp_text": "y"}) + "\n")
    rc = main(["evaluate", "--ref-manifest", str(corpus / "manifest.jsonl"), "--hyp", f"s={hyp}",
               "--out", str(tmp_path / "r")])
    assert rc == 2
    assert (tmp_path / "r" / "report.csv").exists()


def test_enhance_error_codes(corpus, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["enhance", "--checkpoint", str(bad), "--manifest", str(corpus / "manifest.jsonl"),
                 "--out", str(tmp_path / "e")]) == 1
    main(["train", "--identity", "--out", str(tmp_path / "m")])
    assert main(["enhance", "--checkpoint", str(tmp_path / "m" / "best.ckpt"), str(tmp_path / "absent.wav"),
                 "--out", str(tmp_path / "e2")]) == 2


def test_arch_mismatch_is_an_error(corpus, tmp_path):
    main(["train", "--manifest", str(corpus / "manifest.jsonl"), "--max-steps", "1",
          "--out", str(tmp_path / "m")] + _set(TINY_SET))
    rc = main(["enhance", "--checkpoint", str(tmp_path / "m" / "last.ckpt"), "--manifest",
               str(corpus / "manifest.jsonl"), "--out", str(tmp_path / "e")])
    assert rc == 1


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("schedule.k = 2.6\nschedule.kk = 3\n")
    with pytest.raises(ConfigError, match="schedule.kk"):
        load_config(cfg)
    assert main(["evaluate", "--config", str(cfg), "--ref-manifest", "x", "--out", str(tmp_path)]) == 1
    assert main(["train", "--identity", "--set", "train.lrr=1", "--out", str(tmp_path)]) == 1


def test_config_parse_and_dump_round_trip():
    cfg = load_config(overrides=["train.max_steps = 7", "sampler.kind = sde", "# comment", ""])
    assert cfg["train.max_steps"] == 7 and cfg["sampler.kind"] == "sde"
    again = load_config(overrides=dump_config(cfg).splitlines())
    assert again == cfg
    with pytest.raises(ConfigError):
        parse_lines(["no equals sign"])


def test_json_logs(corpus, tmp_path, capsys):
    main(["--json-logs", "train", "--identity", "--out", str(tmp_path)])
    err = capsys.readouterr().err.strip().splitlines()
    assert err and all(json.loads(line)["level"] for line in err)


def _tree_bytes(root, skip=()):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


def test_byte_determinism(tmp_path):
    base = ["--toy", "--n-items", "3", "--seed", "5"] + _set(TOY_SET)
    for tag in ("a", "b"):
        d = tmp_path / tag
        assert main(["simulate", "--out", str(d / "data")] + base) == 0
        assert main(["train", "--manifest", str(d / "data" / "manifest.jsonl"), "--max-steps", "2",
                     "--out", str(d / "model")] + _set(TINY_SET)) == 0
        for kind in ("ode", "sde"):
            assert main(["enhance", "--checkpoint", str(d / "model" / "last.ckpt"), "--manifest",
                         str(d / "data" / "manifest.jsonl"), "--sampler", kind, "--steps", "3", "--seed", "1",
                         "--out", str(d / f"enh_{kind}")] + _set(TINY_SET)) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert _tree_bytes(a / "data") == _tree_bytes(b / "data")
    assert _tree_bytes(a / "enh_ode") == _tree_bytes(b / "enh_ode")
    assert _tree_bytes(a / "enh_sde") == _tree_bytes(b / "enh_sde")
    assert _tree_bytes(a / "model", skip=("train_log.csv",)) == _tree_bytes(b / "model", skip=("train_log.csv",))
    # The log's wall-clock column is the only non-reproducible field.
    la = [r[:4] for r in csv.reader(open(a / "model" / "train_log.csv"))]
    lb = [r[:4] for r in csv.reader(open(b / "model" / "train_log.csv"))]
    assert la == lb
    assert not math.isnan(float(la[1][1]))
