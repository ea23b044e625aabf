"""Model-agnostic evaluation: sequence metrics per query-frequency bucket, perplexity,
and precision/recall for relevance ranking.

Every metric is computed from the ``ClickPredictor`` interface only, so the
same pass serves the proposed model and each baseline.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .model import argmax_sequence, click_indicators, perplexity, rank_of
from .predictors import ClickPredictor
from .session_log import DECILES, QueryFrequencyTable, Session

ALL = "all"
SEQUENCE_LENGTHS = (2, 3, 4)
TOP_POSITION_LENGTHS = (2, 3)
REPORT_COLUMNS = ("model", "decile", "metric", "k", "value", "stddev", "count")


@dataclass
class MetricRow:
    model: str
    decile: str
    metric: str
    k: int | None
    value: float
    stddev: float | None
    count: int


@dataclass
class MetricsReport:
    rows: list[MetricRow] = field(default_factory=list)

    def extend(self, other: "MetricsReport") -> None:
        self.rows.extend(other.rows)

    def get(self, model: str, metric: str, k: int | None = None, decile: str = ALL) -> MetricRow | None:
        for r in self.rows:
            if (r.model, r.metric, r.k, r.decile) == (model, metric, k, decile):
                return r
        return None

    def value(self, model: str, metric: str, k: int | None = None, decile: str = ALL) -> float:
        row = self.get(model, metric, k, decile)
        return float("nan") if row is None else row.value

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([r.model, r.decile, r.metric, "" if r.k is None else r.k, _num(r.value),
                            "" if r.stddev is None else _num(r.stddev), r.count])


def _num(x: float) -> str:
    return repr(float(x))


class _Cells:
    """Accumulates per-session values into (metric, k, decile) cells."""

    def __init__(self):
        self.values: dict[tuple, list[float]] = defaultdict(list)

    def add(self, metric: str, k: int | None, decile: str, value: float) -> None:
        self.values[(metric, k, decile)].append(value)
        self.values[(metric, k, ALL)].append(value)

    def rows(self, model: str, with_std: set[str]) -> list[MetricRow]:
        order = {d: i for i, d in enumerate((ALL, *DECILES))}
        out = []
        for (metric, k, decile) in sorted(self.values, key=lambda t: (t[0], t[1] or 0, order[t[2]])):
            v = np.asarray(self.values[(metric, k, decile)])
            std = float(v.std()) if metric in with_std else None
            out.append(MetricRow(model, decile, metric, k, float(v.mean()), std, len(v)))
        return out


def evaluate(predictor: ClickPredictor, sessions: Iterable[Session], freq: QueryFrequencyTable,
             max_length: int = 4, top_lengths: tuple[int, ...] = TOP_POSITION_LENGTHS) -> MetricsReport:
    """Single pass over test sessions computing every sequence metric and perplexity.

    Sessions with more than ``max_length`` clicks only count toward first-click
    accuracy and perplexity.
    """
    cells = _Cells()
    cache: dict[tuple, object] = {}

    def memo(key, compute):
        if not predictor.slate_only:
            return compute()
        if key not in cache:
            cache[key] = compute()
        return cache[key]

    for s in sessions:
        decile = freq.bucket(s.query)
        slate_key = (s.query, s.ads)
        q = memo(("q", slate_key), lambda: np.asarray(predictor.click_probabilities(s), dtype=float))
        cells.add("perplexity", None, decile, perplexity(q, click_indicators(s)))
        k = s.n_clicks
        if k == 0:
            continue
        first = memo(("first", slate_key), lambda: predictor.predict_first_click(s))
        cells.add("first_click", 1, decile, float(first == s.clicks[0]))
        if k > max_length:
            continue

        def score():
            scored = predictor.scored_sequences(s, k)
            return scored, argmax_sequence(scored)

        scored, predicted = memo(("seq", slate_key, k), score)
        rank = rank_of(scored, s.clicks)
        exact = float(predicted == s.clicks)
        same_set = float(set(predicted) == set(s.clicks))
        reverse = s.has_reverse_pair()
        cells.add("rank", k, decile, rank)
        if reverse:
            cells.add("reverse_rank", k, decile, rank)
        if k in SEQUENCE_LENGTHS:
            cells.add("full_sequence", k, decile, exact)
            if reverse:
                cells.add("reverse_full_sequence", k, decile, exact)
        if k in top_lengths:
            cells.add("top_positions", k, decile, same_set)
            if reverse:
                cells.add("reverse_top_positions", k, decile, same_set)
    return MetricsReport(cells.rows(predictor.name, {"rank", "reverse_rank", "perplexity"}))


def _by_decile(report: MetricsReport, metric: str, k: int | None) -> dict[str, tuple[float, int]]:
    return {r.decile: (r.value, r.count) for r in report.rows if r.metric == metric and r.k == k}


def eval_first_click(predictor, sessions, freq) -> dict[str, tuple[float, int]]:
    return _by_decile(evaluate(predictor, sessions, freq), "first_click", 1)


def eval_full_sequence(predictor, sessions, freq, k: int) -> dict[str, tuple[float, int]]:
    subset = [s for s in sessions if s.n_clicks == k]
    return _by_decile(evaluate(predictor, subset, freq), "full_sequence", k)


def eval_rank(predictor, sessions, freq, k: int) -> dict[str, tuple[float, float, int]]:
    rep = evaluate(predictor, [s for s in sessions if s.n_clicks == k], freq)
    return {r.decile: (r.value, r.stddev, r.count) for r in rep.rows if r.metric == "rank" and r.k == k}


def eval_top_positions(predictor, sessions, freq, k: int) -> dict[str, tuple[float, int]]:
    subset = [s for s in sessions if s.n_clicks == k]
    return _by_decile(evaluate(predictor, subset, freq, max(k, 4), (k,)), "top_positions", k)


def reverse_subset(sessions: Iterable[Session]) -> list[Session]:
    return [s for s in sessions if s.has_reverse_pair()]


def eval_reverse_subset(predictor, sessions, freq) -> MetricsReport:
    return evaluate(predictor, reverse_subset(sessions), freq)


def eval_perplexity(predictor, sessions, freq) -> float:
    return evaluate(predictor, sessions, freq).value(predictor.name, "perplexity")


# --- relevance ------------------------------------------------------------------

def read_labels(path: str | Path) -> dict[tuple[str, str], int]:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != 3 or fields[2] not in ("0", "1"):
                raise ValueError(f"line {lineno}: expected query<TAB>ad_id<TAB>0|1")
            labels[(fields[0], fields[1])] = int(fields[2])
    return labels


@dataclass
class PrecisionRecall:
    recall: list[float]
    precision: list[float]
    auc: float
    evaluated: int
    skipped: int

    @property
    def undefined(self) -> bool:
        return math.isnan(self.auc)


def eval_relevance(score: Callable[[str, str], float], labels: dict[tuple[str, str], int],
                   pairs: Iterable[tuple[str, str]] | None = None) -> PrecisionRecall:
    """Rank labelled pairs by ``score`` and trace precision against recall.

    Ties are broken by ad id, then query. The area is the trapezoid rule over
    recall, starting from recall 0 at the first point's precision.
    """
    skipped = 0
    if pairs is None:
        chosen = list(labels)
    else:
        chosen = []
        for p in dict.fromkeys(pairs):
            if p in labels:
                chosen.append(p)
            else:
                skipped += 1
    ranked = sorted(chosen, key=lambda p: (-score(*p), p[1], p[0]))
    positives = sum(labels[p] for p in ranked)
    if positives == 0:
        return PrecisionRecall([], [], float("nan"), len(ranked), skipped)
    recall, precision = [], []
    hits = 0
    for i, p in enumerate(ranked, start=1):
        hits += labels[p]
        recall.append(hits / positives)
        precision.append(hits / i)
    xs = [0.0] + recall
    ys = [precision[0]] + precision
    auc = sum((xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) / 2 for i in range(1, len(xs)))
    return PrecisionRecall(recall, precision, auc, len(ranked), skipped)


# --- figure data ----------------------------------------------------------------

_FIGURES = {
    "fig4_first_click.csv": (("first_click",), False),
    "fig5_full_sequence.csv": (("full_sequence",), False),
    "fig6_rank.csv": (("rank",), True),
    "fig7_top_positions.csv": (("top_positions",), False),
    "fig8_reverse_sequence.csv": (("reverse_full_sequence", "reverse_rank"), True),
    "fig9_reverse_top_positions.csv": (("reverse_top_positions",), False),
}


def write_figures(report: MetricsReport, curves: dict[str, PrecisionRecall], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    written = []
    path = out / "fig3_relevance_pr.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("model", "recall", "precision"))
        for name, c in curves.items():
            for r, p in zip(c.recall, c.precision):
                w.writerow((name, _num(r), _num(p)))
    written.append(path)
    for fname, (metrics, with_std) in _FIGURES.items():
        path = out / fname
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("model", "decile", "metric", "k", "value", *(("stddev",) if with_std else ()), "count"))
            for r in report.rows:
                if r.metric in metrics and r.decile != ALL:
                    std = (("" if r.stddev is None else _num(r.stddev)),) if with_std else ()
                    w.writerow((r.model, r.decile, r.metric, r.k, _num(r.value), *std, r.count))
        written.append(path)
    return written
