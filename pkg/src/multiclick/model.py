"""The multi-click model: likelihood, exact enumeration, prediction and sampling.

A session is a walk over the ad slate. Before each click the user may leave
satisfied with the ad clicked last (probability rho of that ad; never before
the first click) or give up (eta_k after k clicks). Otherwise the next click
lands on an unclicked position j with probability proportional to
theta_j * gamma[prev, j], prev being the previous click position (0 at the
start). Once every position is clicked the session ends.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate, permutations
from typing import Iterator, Sequence

import numpy as np

from .attractiveness import AttractivenessTable
from .estimation import (Hyperparams, SatisfactionTable, SufficientStats, estimate_eta,
                         estimate_gamma, estimate_rho)
from .session_log import MAX_SLOTS, Session

TIE_RTOL = 1e-12
PROB_CLAMP = 1e-6


class DegenerateStep(ArithmeticError):
    """No unclicked position has positive attractiveness x transition mass."""


@dataclass
class ModelParams:
    eta: np.ndarray
    gamma: np.ndarray
    rho: SatisfactionTable = field(default_factory=SatisfactionTable)
    theta: AttractivenessTable = field(default_factory=AttractivenessTable)
    hyper: Hyperparams | None = None

    @property
    def n_max(self) -> int:
        return len(self.eta) - 1

    def slate(self, query: str, ads: Sequence[str], theta: Sequence[float] | None = None) -> "SlateParams":
        if len(ads) > self.n_max:
            raise ValueError(f"{len(ads)} ads exceed n_max={self.n_max}")
        if theta is None:
            theta = [self.theta.get(query, a) for a in ads]
        return SlateParams(self.eta.tolist(), self.gamma.tolist(), list(theta),
                           [self.rho.get(query, a) for a in ads])


def fit(stats: SufficientStats, hyper: Hyperparams, theta: AttractivenessTable,
        rho_smoothing: float = 0.0, rho_prior: float = 0.5) -> ModelParams:
    return ModelParams(estimate_eta(stats, hyper), estimate_gamma(stats, hyper),
                       estimate_rho(stats, rho_smoothing, rho_prior), theta, hyper)


@dataclass
class SlateParams:
    """Parameters resolved for one displayed slate; positions are 1-based."""

    eta: list[float]
    gamma: list[list[float]]
    theta: list[float]
    rho: list[float]

    @property
    def n(self) -> int:
        return len(self.theta)

    def continue_prob(self, prev: int, k: int) -> float:
        if k >= self.n:
            return 0.0
        rho_prev = self.rho[prev - 1] if prev else 0.0
        return (1.0 - rho_prev) * (1.0 - self.eta[k])

    def termination(self, seq: Sequence[int]) -> float:
        if len(seq) >= self.n:
            return 1.0
        return 1.0 - self.continue_prob(seq[-1] if seq else 0, len(seq))

    def click_weights(self, prev: int, clicked) -> list[float]:
        row = self.gamma[prev]
        return [0.0 if j in clicked else self.theta[j - 1] * row[j] for j in range(1, self.n + 1)]


def step_distribution(slate: SlateParams, prev: int, clicked) -> tuple[float, np.ndarray]:
    """Continuation probability and the next-click distribution over positions 1..n."""
    clicked = set(clicked)
    if len(clicked) >= slate.n:
        raise ValueError("every position is already clicked")
    w = slate.click_weights(prev, clicked)
    total = math.fsum(w)
    if total <= 0.0:
        raise DegenerateStep(f"no click mass after position {prev} with {sorted(clicked)} clicked")
    return slate.continue_prob(prev, len(clicked)), np.asarray(w) / total


def _walk(slate: SlateParams, depth: int) -> Iterator[tuple[tuple[int, ...], float]]:
    """Pre-order walk of click prefixes up to ``depth`` in lexicographic order.

    Yields each prefix with the probability of producing exactly those clicks
    first, before the termination decision. Unreachable prefixes yield 0.
    """
    n = slate.n

    def rec(seq, prob):
        yield seq, prob
        k = len(seq)
        if k == depth or k == n:
            return
        prev = seq[-1] if seq else 0
        cont = slate.continue_prob(prev, k) if prob > 0.0 else 0.0
        if cont > 0.0:
            w = slate.click_weights(prev, seq)
            total = math.fsum(w)
            if total <= 0.0:
                raise DegenerateStep(f"no click mass after position {prev} with {sorted(seq)} clicked")
            scale = prob * cont / total
        else:
            w, scale = None, 0.0
        for j in range(1, n + 1):
            if j in seq:
                continue
            yield from rec(seq + (j,), scale * w[j - 1] if w is not None else 0.0)

    yield from rec((), 1.0)


def slate_sequence_probability(slate: SlateParams, clicks: Sequence[int]) -> float:
    clicks = tuple(clicks)
    if len(set(clicks)) != len(clicks):
        return 0.0
    prob = 1.0
    prev = 0
    for k, c in enumerate(clicks):
        if not 1 <= c <= slate.n:
            return 0.0
        cont = slate.continue_prob(prev, k)
        if cont == 0.0:
            return 0.0
        w = slate.click_weights(prev, clicks[:k])
        total = math.fsum(w)
        if total <= 0.0:
            raise DegenerateStep(f"no click mass after position {prev}")
        prob *= cont * w[c - 1] / total
        prev = c
    return prob * slate.termination(clicks)


def sequence_probability(params: ModelParams, session: Session) -> float:
    """Probability of the session's full click sequence followed by termination."""
    return slate_sequence_probability(params.slate(session.query, session.ads), session.clicks)


def enumerate_sequences(slate: SlateParams) -> list[tuple[tuple[int, ...], float]]:
    """Every ordered click subset of the slate (the empty one included) with its probability."""
    if slate.n > MAX_SLOTS:
        raise ValueError(f"refusing to enumerate {slate.n} positions (limit {MAX_SLOTS})")
    return [(seq, p * slate.termination(seq)) for seq, p in _walk(slate, slate.n)]


def sequences_of_length(slate: SlateParams, k: int) -> list[tuple[tuple[int, ...], float]]:
    """All ordered k-subsets in lexicographic order with full-session probabilities."""
    if slate.n > MAX_SLOTS:
        raise ValueError(f"refusing to enumerate {slate.n} positions (limit {MAX_SLOTS})")
    if not 0 <= k <= slate.n:
        raise ValueError(f"length {k} impossible on {slate.n} positions")
    return [(seq, p * slate.termination(seq)) for seq, p in _walk(slate, k) if len(seq) == k]


def argmax_sequence(scored: Sequence[tuple[tuple[int, ...], float]]) -> tuple[int, ...]:
    """Highest score; near-ties (relative 1e-12) go to the lexicographically first sequence."""
    best = max(p for _, p in scored)
    floor = best - TIE_RTOL * abs(best)
    return min(seq for seq, p in scored if p >= floor)


def rank_of(scored: Sequence[tuple[tuple[int, ...], float]], actual: Sequence[int]) -> int:
    """1-based rank of ``actual`` when sorting by score descending, ties lexicographic."""
    actual = tuple(actual)
    target = None
    for seq, p in scored:
        if seq == actual:
            target = p
            break
    if target is None:
        raise ValueError(f"{actual} is not among the scored sequences")
    tol = TIE_RTOL * abs(target)
    rank = 1
    for seq, p in scored:
        if p > target + tol or (abs(p - target) <= tol and seq < actual):
            rank += 1
    return rank


def predict_sequence(params: ModelParams, session: Session, k: int | None = None) -> tuple[int, ...]:
    k = session.n_clicks if k is None else k
    return argmax_sequence(sequences_of_length(params.slate(session.query, session.ads), k))


def rank_actual_sequence(params: ModelParams, session: Session) -> int:
    slate = params.slate(session.query, session.ads)
    return rank_of(sequences_of_length(slate, session.n_clicks), session.clicks)


def slate_click_marginals(slate: SlateParams) -> np.ndarray:
    """Probability that each position is clicked at some point in the session."""
    q = np.zeros(slate.n)
    for seq, p in _walk(slate, slate.n):
        if seq:
            q[seq[-1] - 1] += p
    return q


def position_click_probabilities(params: ModelParams, session: Session) -> np.ndarray:
    return slate_click_marginals(params.slate(session.query, session.ads))


def first_click_distribution(slate: SlateParams) -> np.ndarray:
    """P(first click = j), unnormalized for abandonment (sums to 1 - eta_0)."""
    cont, dist = step_distribution(slate, 0, ())
    return cont * dist


# --- sampling ---------------------------------------------------------------

MAX_PROPOSALS = 10_000


@dataclass(frozen=True)
class StepTrace:
    """Latent draws of one decision point.

    ``target`` is the accepted transition draw (the click position), ``None``
    when the session stopped; ``proposals`` counts the transition draws made
    until one landed on an attractive ad.
    """

    satisfied: bool
    abandoned: bool
    target: int | None
    proposals: int = 0


@dataclass(frozen=True)
class SampledSession:
    session: Session
    trace: tuple[StepTrace, ...]


def _pick(cum: list[float], u: float) -> int:
    return min(bisect_right(cum, u * cum[-1]), len(cum) - 1)


def _draw_click(slate: SlateParams, prev: int, clicked: set, rng: np.random.Generator) -> tuple[int, int]:
    # Propose from the transition row, accept with probability theta / max theta.
    cand = [j for j in range(1, slate.n + 1) if j not in clicked]
    row = slate.gamma[prev]
    g = [row[j] for j in cand]
    top = max((slate.theta[j - 1] for j, gj in zip(cand, g) if gj > 0), default=0.0)
    if top <= 0.0:
        raise DegenerateStep(f"no click mass after position {prev} with {sorted(clicked)} clicked")
    cum = list(accumulate(g))
    theta = slate.theta
    for attempt in range(1, MAX_PROPOSALS + 1):
        v = cand[_pick(cum, rng.random())]
        if rng.random() * top < theta[v - 1]:
            return v, attempt
    # Acceptance this unlikely: draw from the exact conditional directly.
    cum = list(accumulate(theta[j - 1] * gj for j, gj in zip(cand, g)))
    return cand[_pick(cum, rng.random())], MAX_PROPOSALS


def sample_clicks(slate: SlateParams, rng: np.random.Generator) -> tuple[tuple[int, ...], tuple[StepTrace, ...]]:
    clicks: list[int] = []
    clicked: set[int] = set()
    trace = []
    prev = 0
    while len(clicks) < slate.n:
        rho_prev = slate.rho[prev - 1] if prev else 0.0
        s = bool(prev) and rng.random() < rho_prev
        t = (not s) and rng.random() < slate.eta[len(clicks)]
        if s or t:
            trace.append(StepTrace(s, t, None))
            break
        v, tries = _draw_click(slate, prev, clicked, rng)
        trace.append(StepTrace(False, False, v, tries))
        clicks.append(v)
        clicked.add(v)
        prev = v
    return tuple(clicks), tuple(trace)


def sample_session(params: ModelParams, query: str, ads: Sequence[str], rng: np.random.Generator,
                   session_id: str = "sampled", theta: Sequence[float] | None = None) -> SampledSession:
    slate = params.slate(query, ads, theta)
    clicks, trace = sample_clicks(slate, rng)
    return SampledSession(Session(session_id, query, tuple(ads), clicks), trace)


# --- perplexity -------------------------------------------------------------

def perplexity(q: Sequence[float], clicked: Sequence[int | bool], clamp: float = PROB_CLAMP) -> float:
    """2 to the minus mean per-position log2-likelihood of the click indicators."""
    q = np.clip(np.asarray(q, dtype=float), clamp, 1.0 - clamp)
    c = np.asarray(clicked, dtype=float)
    if q.shape != c.shape or q.size == 0:
        raise ValueError("probability and click vectors must be non-empty and aligned")
    ll = c * np.log2(q) + (1.0 - c) * np.log2(1.0 - q)
    return float(2.0 ** (-ll.mean()))


def click_indicators(session: Session) -> np.ndarray:
    c = np.zeros(session.n)
    for pos in session.clicks:
        c[pos - 1] = 1.0
    return c


def all_orderings(n: int, k: int) -> list[tuple[int, ...]]:
    return list(permutations(range(1, n + 1), k))
