"""SI-SDR and word error rate with insertion/deletion/substitution counts."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass

import numpy as np

# Residual energy at or below this fraction of target energy counts as perfect.
PERFECT_RATIO = 1e-12


@dataclass(frozen=True)
class SiSdrResult:
    value_db: float
    scaling_alpha: float

    @property
    def is_perfect(self) -> bool:
        return math.isinf(self.value_db) and self.value_db > 0


def si_sdr(reference, estimate) -> SiSdrResult:
    """Scale-invariant SDR in dB; ``+inf`` when the estimate is a scaled reference."""
    s = np.asarray(reference, dtype=np.float64)
    s_hat = np.asarray(estimate, dtype=np.float64)
    if s.shape != s_hat.shape:
        raise ValueError(f"length mismatch: reference {s.shape} vs estimate {s_hat.shape}")
    ref_energy = float(np.dot(s, s))
    if ref_energy == 0:
        raise ValueError("reference has zero energy")
    alpha = float(np.dot(s_hat, s)) / ref_energy
    target = alpha * s
    resid = target - s_hat
    t_energy = float(np.dot(target, target))
    r_energy = float(np.dot(resid, resid))
    if r_energy <= PERFECT_RATIO * t_energy:
        return SiSdrResult(math.inf, alpha)
    if t_energy == 0:
        return SiSdrResult(-math.inf, alpha)
    return SiSdrResult(10.0 * math.log10(t_energy / r_energy), alpha)


# ---------------------------------------------------------------------------
# WER
# ---------------------------------------------------------------------------


_DROP = re.compile(r"[^a-z0-9' ]")


def normalize_text(text: str) -> list[str]:
    """Lowercase, map whitespace to spaces, drop chars outside ``[a-z0-9' ]``, split."""
    text = re.sub(r"\s+", " ", text.lower())
    return _DROP.sub("", text).split()


@dataclass(frozen=True)
class WerReport:
    n_ref_words: int
    ins: int
    dels: int
    sub: int

    @property
    def errors(self) -> int:
        return self.ins + self.dels + self.sub

    def _rate(self, n):
        return 100.0 * n / self.n_ref_words

    @property
    def wer(self) -> float:
        # Sum of component rates, so the decomposition holds bit-for-bit.
        return self.ins_rate + self.del_rate + self.sub_rate

    @property
    def ins_rate(self) -> float:
        return self._rate(self.ins)

    @property
    def del_rate(self) -> float:
        return self._rate(self.dels)

    @property
    def sub_rate(self) -> float:
        return self._rate(self.sub)

    def __add__(self, other: WerReport) -> WerReport:
        return WerReport(self.n_ref_words + other.n_ref_words, self.ins + other.ins,
                         self.dels + other.dels, self.sub + other.sub)


def wer_align(ref_tokens, hyp_tokens) -> WerReport:
    """Minimum edit-distance alignment with unit costs.

    Among alignments of equal cost the one with the fewest insertions plus
    deletions (i.e. the most substitutions) is chosen, which makes the three
    counts unique.
    """
    ref, hyp = list(ref_tokens), list(hyp_tokens)
    if not ref:
        raise ValueError("empty reference: WER is undefined")
    R, H = len(ref), len(hyp)
    # Each cell: (cost, ins + del, ins, del, sub); min() compares cost then ins+del.
    prev = [(j, j, j, 0, 0) for j in range(H + 1)]
    for i in range(1, R + 1):
        cur = [(i, i, 0, i, 0)]
        for j in range(1, H + 1):
            c, n, a, d, s = prev[j - 1]
            if ref[i - 1] == hyp[j - 1]:
                diag = (c, n, a, d, s)
            else:
                diag = (c + 1, n, a, d, s + 1)
            c, n, a, d, s = prev[j]
            dele = (c + 1, n + 1, a, d + 1, s)
            c, n, a, d, s = cur[j - 1]
            ins = (c + 1, n + 1, a + 1, d, s)
            cur.append(min(diag, dele, ins, key=lambda e: (e[0], e[1])))
        prev = cur
    _, _, ins, dels, sub = prev[H]
    return WerReport(R, ins, dels, sub)


def wer_from_text(ref: str, hyp: str) -> WerReport:
    return wer_align(normalize_text(ref), normalize_text(hyp))


# ---------------------------------------------------------------------------
# Corpus aggregation
# ---------------------------------------------------------------------------


@dataclass
class CorpusReport:
    wer_rows: list            # (id, WerReport), sorted by id
    si_sdr_rows: list         # (id, value_db), sorted by id
    missing: list

    @property
    def pooled_wer(self) -> WerReport | None:
        if not self.wer_rows:
            return None
        total = WerReport(0, 0, 0, 0)
        for _, r in self.wer_rows:
            total = total + r
        return total

    @property
    def mean_si_sdr(self) -> float | None:
        if not self.si_sdr_rows:
            return None
        vals = [v for _, v in self.si_sdr_rows]
        if math.inf in vals and -math.inf in vals:
            return math.nan
        return math.fsum(vals) / len(vals)

    @property
    def n_perfect(self) -> int:
        return sum(1 for _, v in self.si_sdr_rows if v == math.inf)

    @property
    def complete(self) -> bool:
        return not self.missing


def aggregate(wer_items=(), si_sdr_items=(), missing=()) -> CorpusReport:
    """Pool WER over total reference words; average SI-SDR per utterance.

    ``wer_items`` are ``(id, ref_text, hyp_text)``; ``si_sdr_items`` are
    ``(id, value_db)``.  Output is independent of input order.
    """
    wer_rows = sorted(((uid, wer_from_text(ref, hyp)) for uid, ref, hyp in wer_items),
                      key=lambda r: r[0])
    sdr_rows = sorted(((uid, float(v)) for uid, v in si_sdr_items), key=lambda r: r[0])
    if not wer_rows and not sdr_rows and not missing:
        raise ValueError("nothing to aggregate")
    return CorpusReport(wer_rows, sdr_rows, sorted(missing))


REPORT_COLUMNS = ("system", "id", "n_ref_words", "wer", "ins", "del", "sub", "si_sdr_db")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    return str(v)


def report_rows(report: CorpusReport, system: str):
    """Per-utterance rows then a pooled ``ALL`` row, columns as ``REPORT_COLUMNS``.

    ``wer``/``ins``/``del``/``sub`` are percentages of the reference words.
    """
    by_id = {}
    for uid, r in report.wer_rows:
        by_id.setdefault(uid, {})["wer"] = r
    for uid, v in report.si_sdr_rows:
        by_id.setdefault(uid, {})["sdr"] = v
    rows = []

    def row(uid, w, sdr):
        if w is None:
            return [system, uid, None, None, None, None, None, sdr]
        return [system, uid, w.n_ref_words, w.wer, w.ins_rate, w.del_rate, w.sub_rate, sdr]

    for uid in sorted(by_id):
        rows.append(row(uid, by_id[uid].get("wer"), by_id[uid].get("sdr")))
    rows.append(row("ALL", report.pooled_wer, report.mean_si_sdr))
    return rows


def write_report_csv(path, systems: dict):
    """Write one CSV with rows for each ``{system_name: CorpusReport}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for name in systems:
            for r in report_rows(systems[name], name):
                w.writerow([_fmt(v) for v in r])


def format_table(systems: dict) -> str:
    """Human-readable summary, one line per system."""
    lines = [f"{'system':<14}{'WER/%':>8}{'INS/%':>8}{'DEL/%':>8}{'SUB/%':>8}{'SI-SDR/dB':>11}{'n':>6}"]
    for name, rep in systems.items():
        w = rep.pooled_wer
        sdr = rep.mean_si_sdr
        cells = [f"{x:8.2f}" for x in (w.wer, w.ins_rate, w.del_rate, w.sub_rate)] if w else [f"{'-':>8}"] * 4
        sdr_s = f"{sdr:11.2f}" if sdr is not None else f"{'-':>11}"
        n = len(rep.wer_rows) or len(rep.si_sdr_rows)
        lines.append(f"{name:<14}" + "".join(cells) + sdr_s + f"{n:6d}")
    return "\n".join(lines)
