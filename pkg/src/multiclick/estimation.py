"""One-pass counters and the closed-form posterior estimates built from them.

Counters gathered in a single scan over the log:

* ``psi[d]``          clicks on document d (a document is a (query, ad) pair)
* ``delta[i, j]``     clicks at position j right after a click at i (row 0: first click)
* ``beyond[j]``       sessions with more than j clicks
* ``exactly[j]``      sessions with exactly j clicks
* ``kappa[d]``        sessions that clicked d and went on to click something else
* ``kappa_end[d]``    sessions whose last click was on d
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .session_log import MAINLINE_SLOTS, Session

logger = logging.getLogger(__name__)

DEFAULT_PRIOR_MASS = 10.0

Doc = tuple[str, str]


@dataclass
class SufficientStats:
    n_max: int = MAINLINE_SLOTS
    psi: Counter = field(default_factory=Counter)
    delta: np.ndarray = None
    beyond: np.ndarray = None
    exactly: np.ndarray = None
    kappa: Counter = field(default_factory=Counter)
    kappa_end: Counter = field(default_factory=Counter)
    sessions: int = 0
    rejected: int = 0

    def __post_init__(self):
        size = self.n_max + 1
        if self.delta is None:
            self.delta = np.zeros((size, size), dtype=np.int64)
        if self.beyond is None:
            self.beyond = np.zeros(size, dtype=np.int64)
        if self.exactly is None:
            self.exactly = np.zeros(size, dtype=np.int64)

    def add(self, s: Session) -> bool:
        """Fold one session in. Sessions wider than ``n_max`` are rejected and counted."""
        if s.n > self.n_max:
            self.rejected += 1
            return False
        k = s.n_clicks
        self.sessions += 1
        self.exactly[k] += 1
        self.beyond[:k] += 1
        prev = 0
        for c in s.clicks:
            self.delta[prev, c] += 1
            self.psi[(s.query, s.ads[c - 1])] += 1
            prev = c
        if k:
            docs = [(s.query, s.ads[c - 1]) for c in s.clicks]
            self.kappa_end[docs[-1]] += 1
            for d in docs[:-1]:
                self.kappa[d] += 1
        return True

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        if self.n_max != other.n_max:
            raise ValueError("n_max mismatch")
        return SufficientStats(
            self.n_max, self.psi + other.psi, self.delta + other.delta,
            self.beyond + other.beyond, self.exactly + other.exactly,
            self.kappa + other.kappa, self.kappa_end + other.kappa_end,
            self.sessions + other.sessions, self.rejected + other.rejected)

    def __eq__(self, other):
        if not isinstance(other, SufficientStats):
            return NotImplemented
        return (self.n_max == other.n_max and self.sessions == other.sessions
                and self.rejected == other.rejected
                and +self.psi == +other.psi and +self.kappa == +other.kappa
                and +self.kappa_end == +other.kappa_end
                and np.array_equal(self.delta, other.delta)
                and np.array_equal(self.beyond, other.beyond)
                and np.array_equal(self.exactly, other.exactly))

    def check(self) -> None:
        """Assert the internal consistency relations between counter families."""
        tail = np.cumsum(self.exactly[::-1])[::-1]
        assert np.array_equal(self.beyond[:-1], tail[1:]), "beyond != tail sums of exactly"
        for d in set(self.psi) | set(self.kappa) | set(self.kappa_end):
            assert self.psi[d] == self.kappa[d] + self.kappa_end[d], d
        assert self.delta[:, 0].sum() == 0
        assert self.delta[0].sum() == self.beyond[0]


def accumulate_stats(sessions: Iterable[Session], n_max: int = MAINLINE_SLOTS) -> SufficientStats:
    stats = SufficientStats(n_max)
    for s in sessions:
        stats.add(s)
    if stats.rejected:
        logger.warning("rejected %d sessions with more than %d ads", stats.rejected, n_max)
    return stats


@dataclass
class Hyperparams:
    """Beta pseudo-counts for each perseverance step and Dirichlet rows for transitions.

    ``gamma_alpha`` has shape (n_max + 1, n_max + 1); column 0 is unused and zero.
    """

    eta_alpha: np.ndarray
    eta_beta: np.ndarray
    gamma_alpha: np.ndarray

    @property
    def n_max(self) -> int:
        return len(self.eta_alpha) - 1

    @classmethod
    def uniform(cls, n_max: int = MAINLINE_SLOTS, mass: float = DEFAULT_PRIOR_MASS) -> "Hyperparams":
        size = n_max + 1
        gamma = np.full((size, size), mass / n_max)
        gamma[:, 0] = 0.0
        return cls(np.full(size, mass / 2), np.full(size, mass / 2), gamma)

    def validate(self) -> None:
        if np.any(self.eta_alpha <= 0) or np.any(self.eta_beta <= 0):
            raise ValueError("perseverance pseudo-counts must be positive")
        if np.any(self.gamma_alpha[:, 1:] < 0) or np.any(self.gamma_alpha[:, 1:].sum(axis=1) <= 0):
            raise ValueError("every transition row needs positive pseudo-count mass")


def estimate_eta(stats: SufficientStats, hyper: Hyperparams) -> np.ndarray:
    """Posterior mean of the per-step abandonment probability."""
    hyper.validate()
    num = stats.exactly + hyper.eta_alpha
    return num / (num + stats.beyond + hyper.eta_beta)


@dataclass
class SatisfactionTable:
    values: dict[Doc, float] = field(default_factory=dict)
    default: float = 0.5

    def get(self, query: str, ad_id: str) -> float:
        return self.values.get((query, ad_id), self.default)


def estimate_rho(stats: SufficientStats, smoothing: float = 0.0,
                 prior_mean: float = 0.5) -> SatisfactionTable:
    """Fraction of a document's clicks that ended the session.

    ``smoothing`` adds Beta(smoothing, smoothing) pseudo-counts; never-clicked
    documents fall back to ``prior_mean``.
    """
    table = SatisfactionTable(default=prior_mean)
    for d in set(stats.kappa) | set(stats.kappa_end):
        end, cont = stats.kappa_end[d], stats.kappa[d]
        total = end + cont + 2 * smoothing
        if total > 0:
            table.values[d] = (end + smoothing) / total
    return table


def estimate_gamma(stats: SufficientStats, hyper: Hyperparams) -> np.ndarray:
    """Dirichlet posterior mean of every transition row, row 0 included."""
    hyper.validate()
    if hyper.gamma_alpha.shape != stats.delta.shape:
        raise ValueError("hyperparameter shape does not match n_max")
    mass = stats.delta + hyper.gamma_alpha
    mass[:, 0] = 0.0
    return mass / mass.sum(axis=1, keepdims=True)


def fit_priors(sessions: Iterable[Session], n_max: int = MAINLINE_SLOTS,
               mass: float = DEFAULT_PRIOR_MASS) -> Hyperparams:
    """Empirical-Bayes hyperparameters from the priors window.

    The rates are estimated under a flat prior of total mass one and then
    rescaled to pseudo-count mass ``mass``.
    """
    stats = accumulate_stats(sessions, n_max)
    if stats.sessions == 0:
        logger.warning("priors window is empty; using uniform hyperparameters")
        return Hyperparams.uniform(n_max, mass)
    flat = Hyperparams.uniform(n_max, 1.0)
    eta = estimate_eta(stats, flat)
    gamma = estimate_gamma(stats, flat)
    return Hyperparams(mass * eta, mass * (1.0 - eta), mass * gamma)
