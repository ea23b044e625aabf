"""Session records, log ingestion, query-frequency buckets and corpus statistics.

A session line is tab separated::

    session_id <TAB> query <TAB> ad_id,ad_id,... <TAB> click_pos,click_pos,...

Click positions are 1-based and listed in click order; the click field may be
empty.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

logger = logging.getLogger(__name__)

MAINLINE_SLOTS = 4
MAX_SLOTS = 8

DECILES = ("0-10", "10-50", "50-100", "100-500", "500-1000", ">1000")
DECILE_EDGES = (0, 10, 50, 100, 500, 1000)

_WS = re.compile(r"\s+")


class LogFormatError(ValueError):
    """A session record that cannot be parsed. Carries the 1-based line number."""

    def __init__(self, lineno: int | None, message: str):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class DuplicateClick(LogFormatError):
    pass


def normalize_query(query: str) -> str:
    return _WS.sub(" ", query.strip().lower())


@dataclass(frozen=True)
class Session:
    session_id: str
    query: str
    ads: tuple[str, ...]
    clicks: tuple[int, ...] = ()

    def __post_init__(self):
        n = len(self.ads)
        if n > MAX_SLOTS:
            raise LogFormatError(None, f"session {self.session_id}: {n} ads exceeds {MAX_SLOTS}")
        seen = set()
        for c in self.clicks:
            if not 1 <= c <= n:
                raise LogFormatError(None, f"session {self.session_id}: click position {c} outside 1..{n}")
            if c in seen:
                raise DuplicateClick(None, f"session {self.session_id}: position {c} clicked twice")
            seen.add(c)

    @property
    def n(self) -> int:
        return len(self.ads)

    @property
    def n_clicks(self) -> int:
        return len(self.clicks)

    def ad_at(self, position: int) -> str:
        return self.ads[position - 1]

    def has_reverse_pair(self) -> bool:
        """True when some click is followed directly by a click at a smaller position."""
        return any(b < a for a, b in zip(self.clicks, self.clicks[1:]))


@dataclass
class ParseReport:
    lines: int = 0
    dropped_no_ads: int = 0
    wide_slates: int = 0


def _parse_positions(text: str, lineno: int) -> tuple[int, ...]:
    if not text.strip():
        return ()
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok.isdigit():
            raise LogFormatError(lineno, f"bad click position {tok!r}")
        out.append(int(tok))
    if len(set(out)) != len(out):
        raise DuplicateClick(lineno, f"duplicate click position in {text!r}")
    return tuple(out)


def parse_line(line: str, lineno: int = 1) -> Session | None:
    """Parse one record. Returns None for a session that showed no ads."""
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 4:
        raise LogFormatError(lineno, f"expected 4 tab-separated fields, got {len(fields)}")
    sid, query, ads_text, clicks_text = fields
    if not sid:
        raise LogFormatError(lineno, "empty session id")
    ads = tuple(a.strip() for a in ads_text.split(",") if a.strip())
    clicks = _parse_positions(clicks_text, lineno)
    if not ads:
        if clicks:
            raise LogFormatError(lineno, "clicks recorded on a session without ads")
        return None
    if len(ads) > MAX_SLOTS:
        raise LogFormatError(lineno, f"{len(ads)} ads exceeds the {MAX_SLOTS}-slot limit")
    try:
        return Session(sid, normalize_query(query), ads, clicks)
    except DuplicateClick as exc:
        raise DuplicateClick(lineno, str(exc)) from None
    except LogFormatError as exc:
        raise LogFormatError(lineno, str(exc)) from None


def iter_sessions(stream: Iterable[str], report: ParseReport | None = None) -> Iterator[Session]:
    """Stream sessions from lines, skipping blank lines and sessions with no ads."""
    report = report if report is not None else ParseReport()
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        report.lines += 1
        session = parse_line(line, lineno)
        if session is None:
            report.dropped_no_ads += 1
            continue
        if session.n > MAINLINE_SLOTS:
            report.wide_slates += 1
            if report.wide_slates == 1:
                logger.warning("line %d: %d ads shown, more than the %d mainline slots",
                               lineno, session.n, MAINLINE_SLOTS)
        yield session


def parse_log(stream: Iterable[str], report: ParseReport | None = None) -> list[Session]:
    report = report if report is not None else ParseReport()
    sessions = list(iter_sessions(stream, report))
    if report.dropped_no_ads:
        logger.info("dropped %d sessions without mainline ads", report.dropped_no_ads)
    return sessions


def read_sessions(path: str | Path, report: ParseReport | None = None) -> list[Session]:
    with open(path, encoding="utf-8") as fh:
        return parse_log(fh, report)


def format_session(s: Session) -> str:
    return "\t".join((s.session_id, s.query, ",".join(s.ads), ",".join(map(str, s.clicks))))


def write_sessions(sessions: Iterable[Session], fh: TextIO) -> int:
    count = 0
    for s in sessions:
        fh.write(format_session(s) + "\n")
        count += 1
    return count


# --- corpus split -----------------------------------------------------------

SPLIT_NAMES = ("priors", "train", "test")


@dataclass
class CorpusSplit:
    """Three consecutive weeks: priors, train and test."""

    priors: list[Session]
    train: list[Session]
    test: list[Session]

    def __post_init__(self):
        seen: dict[str, str] = {}
        for name in SPLIT_NAMES:
            for s in getattr(self, name):
                other = seen.setdefault(s.session_id, name)
                if other != name:
                    raise ValueError(f"session {s.session_id} appears in both {other} and {name}")

    @classmethod
    def load(cls, directory: str | Path) -> "CorpusSplit":
        directory = Path(directory)
        return cls(*(read_sessions(directory / f"{name}.tsv") for name in SPLIT_NAMES))


# --- query frequency --------------------------------------------------------

def bucket_of(count: int) -> str:
    """Bucket label for an impression count; lower edges are inclusive."""
    if count < 0:
        raise ValueError("negative count")
    label = DECILES[0]
    for edge, name in zip(DECILE_EDGES, DECILES):
        if count >= edge:
            label = name
    return label


@dataclass(frozen=True)
class QueryFrequencyTable:
    counts: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_sessions(cls, sessions: Iterable[Session]) -> "QueryFrequencyTable":
        return cls(dict(Counter(s.query for s in sessions)))

    def count(self, query: str) -> int:
        return self.counts.get(query, 0)

    def bucket(self, query: str) -> str:
        return bucket_of(self.count(query))


def bucket_query(query: str, table: QueryFrequencyTable) -> str:
    return table.bucket(query)


# --- corpus statistics ------------------------------------------------------

@dataclass
class ClickDistanceHistogram:
    distances: np.ndarray
    mass: np.ndarray
    pairs: int

    @property
    def empty(self) -> bool:
        return self.pairs == 0

    def at(self, distance: int) -> float:
        return float(self.mass[distance - int(self.distances[0])])


def click_distance_histogram(sessions: Iterable[Session], n_max: int = MAINLINE_SLOTS) -> ClickDistanceHistogram:
    """Normalized histogram of c_{i+1} - c_i over consecutive click pairs."""
    span = n_max - 1
    counts = np.zeros(2 * span + 1, dtype=np.int64)
    for s in sessions:
        for a, b in zip(s.clicks, s.clicks[1:]):
            d = b - a
            if abs(d) > span:
                raise ValueError(f"session {s.session_id}: click distance {d} outside +-{span}")
            counts[d + span] += 1
    pairs = int(counts.sum())
    mass = counts / pairs if pairs else np.zeros(len(counts))
    return ClickDistanceHistogram(np.arange(-span, span + 1), mass, pairs)


@dataclass
class ClickCountFractions:
    """Fractions of clicked sessions with exactly 1..K clicks."""

    clicked: int
    counts: dict[int, int]

    @property
    def undefined(self) -> bool:
        return self.clicked == 0

    @property
    def fractions(self) -> dict[int, float]:
        if self.clicked == 0:
            return {k: float("nan") for k in self.counts}
        return {k: v / self.clicked for k, v in self.counts.items()}


def multi_click_stats(sessions: Iterable[Session], table: QueryFrequencyTable | None = None,
                      max_clicks: int = MAINLINE_SLOTS) -> dict[str, ClickCountFractions]:
    """Click-count fractions per decile plus an ``"all"`` row.

    Sessions are bucketed with ``table``; without one everything lands in "all".
    """
    per: dict[str, Counter] = {}
    for s in sessions:
        if s.n_clicks == 0:
            continue
        keys = ["all"] if table is None else ["all", table.bucket(s.query)]
        for key in keys:
            per.setdefault(key, Counter())[s.n_clicks] += 1
    top = max([max_clicks] + [max(c) for c in per.values()])
    out = {}
    for key in ["all", *DECILES]:
        c = per.get(key, Counter())
        if key != "all" and table is None:
            continue
        out[key] = ClickCountFractions(sum(c.values()), {k: c.get(k, 0) for k in range(1, top + 1)})
    return out
