"""Word-sharing attractiveness estimator.

Every impression of an ad adds one occurrence for each distinct scored word in
its copy; a click on the ad adds one clicked occurrence. Queries seen at least
``threshold`` times in the training window keep their own word counts, all
other queries pool into a global scope. The attractiveness of an ad is the mean
clicked/shown ratio of its words.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

from .session_log import QueryFrequencyTable, Session

logger = logging.getLogger(__name__)

GLOBAL_SCOPE = "*"
FREQUENT_QUERY_THRESHOLD = 50

STOP_WORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can could did do does doing down during
each few for from further had has have having he her here hers him his how i if
in into is it its itself just me more most my no nor not now of off on once
only or other our ours out over own same she should so some such than that the
their them then there these they this those through to too under until up very
was we were what when where which while who whom why will with would you your
""".split())

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class AdCopy:
    ad_id: str
    title_tokens: tuple[str, ...]
    description_tokens: tuple[str, ...]
    display_url_token: str

    def __post_init__(self):
        if not self.display_url_token or any(c.isspace() for c in self.display_url_token):
            raise ValueError(f"ad {self.ad_id}: display URL must be a single token")

    @classmethod
    def from_text(cls, ad_id: str, title: str, description: str, display_url: str) -> "AdCopy":
        return cls(ad_id, tuple(tokenize(title)), tuple(tokenize(description)),
                   display_url.strip().lower())

    def words(self, stop_words: frozenset[str] = STOP_WORDS) -> frozenset[str]:
        """Distinct scored words: title and description minus stop words, plus the URL."""
        body = {w for w in self.title_tokens + self.description_tokens if w not in stop_words}
        body.add(self.display_url_token)
        return frozenset(body)


def read_ad_copies(path: str | Path) -> dict[str, AdCopy]:
    copies = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != 4:
                raise ValueError(f"line {lineno}: expected 4 tab-separated fields")
            copies[fields[0]] = AdCopy.from_text(*fields)
    return copies


def write_ad_copy(fh: TextIO, copy: AdCopy) -> None:
    fh.write("\t".join((copy.ad_id, " ".join(copy.title_tokens),
                        " ".join(copy.description_tokens), copy.display_url_token)) + "\n")


@dataclass
class WordStats:
    """Per-scope word counts: scope -> word -> [shown, clicked]."""

    threshold: int = FREQUENT_QUERY_THRESHOLD
    frequent: frozenset[str] = frozenset()
    counts: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    missing_ads: set[str] = field(default_factory=set)
    stop_words: frozenset[str] = STOP_WORDS

    def scope_of(self, query: str) -> str:
        return query if query in self.frequent else GLOBAL_SCOPE

    def add_impression(self, scope: str, words: Iterable[str], clicked: bool) -> None:
        table = self.counts.setdefault(scope, {})
        for w in words:
            entry = table.get(w)
            if entry is None:
                entry = table[w] = [0, 0]
            entry[0] += 1
            if clicked:
                entry[1] += 1

    def get(self, scope: str, word: str) -> tuple[int, int]:
        entry = self.counts.get(scope, {}).get(word)
        return (entry[0], entry[1]) if entry else (0, 0)

    def merge(self, other: "WordStats") -> "WordStats":
        if (self.threshold, self.frequent) != (other.threshold, other.frequent):
            raise ValueError("cannot merge word stats built with different scoping")
        out = WordStats(self.threshold, self.frequent, stop_words=self.stop_words)
        for src in (self, other):
            for scope, table in src.counts.items():
                dst = out.counts.setdefault(scope, {})
                for w, (shown, clicked) in table.items():
                    entry = dst.setdefault(w, [0, 0])
                    entry[0] += shown
                    entry[1] += clicked
            out.missing_ads |= src.missing_ads
        return out

    @property
    def mean_ratio(self) -> float:
        """Pooled clicked/shown over every counted word occurrence; the cold-start value."""
        shown = clicked = 0
        for table in self.counts.values():
            for n, c in table.values():
                shown += n
                clicked += c
        return clicked / shown if shown else 0.0

    def dump(self, fh: TextIO) -> None:
        for scope in sorted(self.counts):
            for w in sorted(self.counts[scope]):
                n, c = self.counts[scope][w]
                fh.write(f"{w}\t{scope}\t{n}\t{c}\n")

    @classmethod
    def load(cls, fh: Iterable[str], threshold: int = FREQUENT_QUERY_THRESHOLD) -> "WordStats":
        stats = cls(threshold)
        frequent = set()
        for line in fh:
            if not line.strip():
                continue
            w, scope, n, c = line.rstrip("\r\n").split("\t")
            stats.counts.setdefault(scope, {})[w] = [int(n), int(c)]
            if scope != GLOBAL_SCOPE:
                frequent.add(scope)
        stats.frequent = frozenset(frequent)
        return stats


def build_word_stats(sessions: Iterable[Session], copies: dict[str, AdCopy],
                     freq: QueryFrequencyTable, threshold: int = FREQUENT_QUERY_THRESHOLD,
                     stop_words: frozenset[str] = STOP_WORDS) -> WordStats:
    frequent = frozenset(q for q, c in freq.counts.items() if c >= threshold)
    stats = WordStats(threshold, frequent, stop_words=stop_words)
    word_cache: dict[str, frozenset[str]] = {}
    for s in sessions:
        scope = stats.scope_of(s.query)
        clicked = set(s.clicks)
        for pos, ad in enumerate(s.ads, start=1):
            words = word_cache.get(ad)
            if words is None:
                copy = copies.get(ad)
                if copy is None:
                    stats.missing_ads.add(ad)
                    continue
                words = word_cache[ad] = copy.words(stop_words)
            stats.add_impression(scope, words, pos in clicked)
    if stats.missing_ads:
        logger.warning("%d displayed ads have no ad copy and were skipped", len(stats.missing_ads))
    return stats


def estimate_theta(ad: AdCopy, query: str, stats: WordStats) -> float:
    """Mean clicked/shown ratio over the ad's words that were ever shown in scope.

    Words never shown in the query's scope are left out of both the sum and the
    length. An ad with no such words gets the pooled mean.
    """
    scope = stats.scope_of(query)
    table = stats.counts.get(scope, {})
    total = 0.0
    scored = 0
    for w in ad.words(stats.stop_words):
        entry = table.get(w)
        if entry is None or entry[0] == 0:
            continue
        total += entry[1] / entry[0]
        scored += 1
    if scored == 0:
        return stats.mean_ratio
    return total / scored


@dataclass
class AttractivenessTable:
    values: dict[tuple[str, str], float] = field(default_factory=dict)
    default: float = 0.5

    def get(self, query: str, ad_id: str) -> float:
        return self.values.get((query, ad_id), self.default)


def build_attractiveness_table(pairs: Iterable[tuple[str, str]], copies: dict[str, AdCopy],
                               stats: WordStats) -> AttractivenessTable:
    table = AttractivenessTable(default=stats.mean_ratio)
    for query, ad in pairs:
        copy = copies.get(ad)
        if copy is not None and (query, ad) not in table.values:
            table.values[(query, ad)] = estimate_theta(copy, query, stats)
    return table
