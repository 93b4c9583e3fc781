"""Cluster and diarization quality metrics.

Partition agreement (adjusted Rand index, normalized mutual information)
is computed exactly from contingency counts; the text-domain metrics map
predicted speakers onto reference speakers by minimum total error before
scoring, so any relabeling of either side scores identically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, log
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_MAPPING_LIMIT = 8


@dataclass(frozen=True)
class LabeledTranscript:
    """Per-embedding speaker labels and word tokens for one session."""

    session: str
    labels: tuple
    words: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("transcript has no labels")
        if len(self.labels) != len(self.words):
            raise ValueError("labels and word lists must align one-to-one")

    @classmethod
    def from_entries(
        cls, session: str, labels: Sequence, words: Sequence[Sequence[str]]
    ) -> "LabeledTranscript":
        return cls(
            session=session,
            labels=tuple(labels),
            words=tuple(tuple(str(t) for t in w) for w in words),
        )

    def total_words(self) -> int:
        return sum(len(w) for w in self.words)


@dataclass(frozen=True)
class MetricsReport:
    ari: float
    nmi: float
    spk_diff: int
    cpwer: float | None = None
    text_der: float | None = None

    def __post_init__(self):
        if not -1.0 - 1e-9 <= self.ari <= 1.0 + 1e-9:
            raise ValueError(f"ari out of range: {self.ari}")
        if not 0.0 <= self.nmi <= 1.0 + 1e-9:
            raise ValueError(f"nmi out of range: {self.nmi}")
        if self.spk_diff < 0:
            raise ValueError(f"spk_diff must be >= 0: {self.spk_diff}")
        if self.cpwer is not None and self.cpwer < 0:
            raise ValueError(f"cpwer must be >= 0: {self.cpwer}")
        if self.text_der is not None and not 0.0 <= self.text_der <= 1.0:
            raise ValueError(f"text_der out of range: {self.text_der}")

    def as_dict(self) -> dict:
        return {
            "ari": self.ari,
            "nmi": self.nmi,
            "spk_diff": self.spk_diff,
            "cpwer": self.cpwer,
            "text_der": self.text_der,
        }


def _contingency(pred: Sequence, truth: Sequence) -> np.ndarray:
    if len(pred) != len(truth):
        raise ValueError(
            f"label sequences differ in length: {len(pred)} vs {len(truth)}"
        )
    if len(pred) == 0:
        raise ValueError("label sequences are empty")
    _, pi = np.unique([str(x) for x in pred], return_inverse=True)
    _, ti = np.unique([str(x) for x in truth], return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def adjusted_rand_index(pred: Sequence, truth: Sequence) -> float:
    """Pair-counting partition agreement, chance-corrected; exact rational
    arithmetic so results match a brute-force pair count bit for bit."""
    table = _contingency(pred, truth)
    n = int(table.sum())
    index = sum(comb(int(v), 2) for v in table.flat)
    row = sum(comb(int(v), 2) for v in table.sum(axis=1))
    col = sum(comb(int(v), 2) for v in table.sum(axis=0))
    total = comb(n, 2)
    if total == 0:
        return 1.0
    expected = Fraction(row * col, total)
    max_index = Fraction(row + col, 2)
    denom = max_index - expected
    if denom == 0:
        return 1.0
    return float((Fraction(index) - expected) / denom)


def normalized_mutual_information(pred: Sequence, truth: Sequence) -> float:
    """Mutual information normalized by the geometric mean of the two label
    entropies (natural logs). Two single-cluster partitions score 1; a
    single-cluster partition against a split one scores 0."""
    table = _contingency(pred, truth)
    n = table.sum()
    pu = table.sum(axis=1) / n
    pv = table.sum(axis=0) / n
    hu = -sum(p * log(p) for p in pu if p > 0)
    hv = -sum(p * log(p) for p in pv if p > 0)
    if hu == 0.0 and hv == 0.0:
        return 1.0
    if hu == 0.0 or hv == 0.0:
        return 0.0
    mi = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            nij = table[i, j]
            if nij == 0:
                continue
            pij = nij / n
            mi += pij * log(pij / (pu[i] * pv[j]))
    value = mi / np.sqrt(hu * hv)
    return float(min(max(value, 0.0), 1.0))


def speaker_count_diff(pred_k: int, true_k: int) -> int:
    """Absolute difference between predicted and true speaker counts."""
    if pred_k < 1 or true_k < 1:
        raise ValueError("speaker counts must be >= 1")
    return abs(pred_k - true_k)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance (insert/delete/substitute, unit costs) between two
    token sequences."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ta != tb),
            )
        prev = cur
    return prev[-1]


def _speaker_streams(t: LabeledTranscript) -> dict:
    streams: dict = {}
    for lab, words in zip(t.labels, t.words):
        streams.setdefault(str(lab), []).append(words)
    return {lab: [w for chunk in chunks for w in chunk] for lab, chunks in streams.items()}


def _min_assignment_cost(cost: np.ndarray, mapping: str) -> int:
    """Minimum-total-cost one-to-one assignment on a square integer matrix."""
    k = cost.shape[0]
    if mapping == "exhaustive":
        best = None
        for perm in itertools.permutations(range(k)):
            total = int(sum(cost[i, perm[i]] for i in range(k)))
            if best is None or total < best:
                best = total
        return best
    rows, cols = linear_sum_assignment(cost)
    return int(cost[rows, cols].sum())


def cpwer(
    pred: LabeledTranscript, truth: LabeledTranscript, mapping: str = "auto"
) -> float:
    """Concatenated minimum-permutation word error rate.

    Each speaker's words are concatenated in time order; predicted speakers
    are matched to reference speakers by the permutation minimizing the
    summed word-level edit distance (exhaustive search up to
    8 speakers, Hungarian assignment beyond), and the total edit count is
    divided by the total reference word count. ``mapping`` forces
    "exhaustive" or "hungarian" for cross-checks.
    """
    pred_streams = _speaker_streams(pred)
    true_streams = _speaker_streams(truth)
    total_true = sum(len(w) for w in true_streams.values())
    if total_true == 0:
        raise ValueError("reference transcript has no words")

    pred_keys = sorted(pred_streams)
    true_keys = sorted(true_streams)
    k = max(len(pred_keys), len(true_keys))
    cost = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        pw = pred_streams[pred_keys[i]] if i < len(pred_keys) else []
        for j in range(k):
            tw = true_streams[true_keys[j]] if j < len(true_keys) else []
            cost[i, j] = levenshtein(pw, tw)
    if mapping == "auto":
        mapping = "exhaustive" if k <= EXHAUSTIVE_MAPPING_LIMIT else "hungarian"
    if mapping not in ("exhaustive", "hungarian"):
        raise ValueError(f"unknown mapping mode: {mapping!r}")
    return _min_assignment_cost(cost, mapping) / total_true


def text_der(pred: LabeledTranscript, truth: LabeledTranscript) -> float:
    """Fraction of words attributed to the wrong speaker under the optimal
    speaker mapping.

    Requires both sides to carry the identical word sequence (the
    ground-truth transcription regime); use :func:`cpwer` when the texts
    themselves differ.
    """
    pred_flat = [w for chunk in pred.words for w in chunk]
    true_flat = [w for chunk in truth.words for w in chunk]
    if pred_flat != true_flat:
        raise ValueError(
            "word sequences differ between prediction and reference; "
            "text_der requires identical text (use cpwer instead)"
        )
    total = len(true_flat)
    if total == 0:
        raise ValueError("transcripts have no words")
    if len(pred.labels) != len(truth.labels):
        raise ValueError("transcripts have different entry counts")

    pred_names = sorted({str(x) for x in pred.labels})
    true_names = sorted({str(x) for x in truth.labels})
    overlap = np.zeros((len(pred_names), len(true_names)), dtype=np.int64)
    p_index = {name: i for i, name in enumerate(pred_names)}
    t_index = {name: i for i, name in enumerate(true_names)}
    for plab, tlab, words in zip(pred.labels, truth.labels, truth.words):
        overlap[p_index[str(plab)], t_index[str(tlab)]] += len(words)
    rows, cols = linear_sum_assignment(-overlap)
    correct = int(overlap[rows, cols].sum())
    return (total - correct) / total


def compute_report(
    pred_labels: Sequence,
    true_labels: Sequence,
    pred_k: int | None = None,
    true_k: int | None = None,
    pred_transcript: LabeledTranscript | None = None,
    truth_transcript: LabeledTranscript | None = None,
) -> MetricsReport:
    """Bundle all applicable metrics for one session.

    Speaker counts default to the number of distinct labels on each side;
    text metrics appear only when both transcripts are provided.
    """
    ari = adjusted_rand_index(pred_labels, true_labels)
    nmi = normalized_mutual_information(pred_labels, true_labels)
    pk = pred_k if pred_k is not None else len({str(x) for x in pred_labels})
    tk = true_k if true_k is not None else len({str(x) for x in true_labels})
    diff = speaker_count_diff(pk, tk)
    wer = None
    der = None
    if pred_transcript is not None and truth_transcript is not None:
        wer = cpwer(pred_transcript, truth_transcript)
        pred_flat = [w for chunk in pred_transcript.words for w in chunk]
        true_flat = [w for chunk in truth_transcript.words for w in chunk]
        if pred_flat == true_flat and true_flat:
            der = text_der(pred_transcript, truth_transcript)
    return MetricsReport(ari=ari, nmi=nmi, spk_diff=diff, cpwer=wer, text_der=der)


def format_report_table(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    """Aligned plain-text table of metric reports, one row per method."""
    headers = ["Method", "ARI", "NMI", "SpkDiff", "cpWER (%)", "TextDER (%)"]
    body = []
    for name, rep in rows:
        body.append(
            [
                name,
                f"{rep.ari:.4f}",
                f"{rep.nmi:.4f}",
                str(rep.spk_diff),
                "-" if rep.cpwer is None else f"{100 * rep.cpwer:.2f}",
                "-" if rep.text_der is None else f"{100 * rep.text_der:.2f}",
            ]
        )
    widths = [max(len(headers[c]), *(len(r[c]) for r in body)) if body else len(headers[c])
              for c in range(len(headers))]
    lines = [
        "  ".join(h.ljust(widths[c]) for c, h in enumerate(headers)),
        "  ".join("-" * widths[c] for c in range(len(headers))),
    ]
    for r in body:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in range(len(headers))))
    return "\n".join(lines)
