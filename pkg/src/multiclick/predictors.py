"""The prediction interface shared by the proposed model and every baseline.

A predictor scores ordered click sequences for a session's slate. Everything
the evaluation harness needs (argmax sequence, rank of the observed sequence,
first-click prediction, per-position click probabilities) derives from that.
"""

from __future__ import annotations

from itertools import permutations
from typing import Sequence

import numpy as np

from .attractiveness import AdCopy, WordStats, estimate_theta
from .model import (ModelParams, SlateParams, argmax_sequence, first_click_distribution, rank_of,
                    sequences_of_length, slate_click_marginals, slate_sequence_probability)
from .session_log import Session

Scored = list[tuple[tuple[int, ...], float]]


class ClickPredictor:
    name = "base"
    # Predictions depend on the query and displayed ads only, so the evaluation
    # harness may reuse them across sessions showing the same slate.
    slate_only = True

    def sequence_score(self, session: Session, seq: tuple[int, ...]) -> float:
        raise NotImplementedError

    def scored_sequences(self, session: Session, k: int) -> Scored:
        """Every ordered k-subset of positions, lexicographic, with its score."""
        return [(seq, self.sequence_score(session, seq))
                for seq in permutations(range(1, session.n + 1), k)]

    def first_click_scores(self, session: Session) -> np.ndarray:
        raise NotImplementedError

    def click_probabilities(self, session: Session) -> np.ndarray:
        raise NotImplementedError

    def predict_sequence(self, session: Session, k: int | None = None) -> tuple[int, ...]:
        k = session.n_clicks if k is None else k
        return argmax_sequence(self.scored_sequences(session, k))

    def predict_first_click(self, session: Session) -> int:
        scores = np.asarray(self.first_click_scores(session), dtype=float)
        best = scores.max()
        return int(np.flatnonzero(scores >= best - 1e-12 * abs(best))[0]) + 1

    def rank_actual(self, session: Session) -> int:
        return rank_of(self.scored_sequences(session, session.n_clicks), session.clicks)


class ThetaLookup:
    """Attractiveness of (query, ad): fitted table first, then cold start from ad words."""

    def __init__(self, params_theta, stats: WordStats | None = None,
                 copies: dict[str, AdCopy] | None = None):
        self.table = params_theta
        self.stats = stats
        self.copies = copies or {}
        self._cache: dict[tuple[str, str], float] = {}

    def __call__(self, query: str, ad: str) -> float:
        key = (query, ad)
        if key in self.table.values:
            return self.table.values[key]
        if key not in self._cache:
            copy = self.copies.get(ad)
            if self.stats is not None and copy is not None:
                self._cache[key] = estimate_theta(copy, query, self.stats)
            else:
                self._cache[key] = self.table.default
        return self._cache[key]

    def vector(self, session: Session) -> list[float]:
        return [self(session.query, a) for a in session.ads]


class ModelPredictor(ClickPredictor):
    name = "ours"

    def __init__(self, params: ModelParams, stats: WordStats | None = None,
                 copies: dict[str, AdCopy] | None = None, name: str = "ours"):
        self.params = params
        self.theta = ThetaLookup(params.theta, stats, copies)
        self.name = name
        self._slates: dict[tuple, SlateParams] = {}

    def slate(self, session: Session) -> SlateParams:
        key = (session.query, session.ads)
        slate = self._slates.get(key)
        if slate is None:
            slate = self._slates[key] = self.params.slate(session.query, session.ads,
                                                          self.theta.vector(session))
        return slate

    def scored_sequences(self, session: Session, k: int) -> Scored:
        return sequences_of_length(self.slate(session), k)

    def sequence_score(self, session: Session, seq: Sequence[int]) -> float:
        return slate_sequence_probability(self.slate(session), seq)

    def first_click_scores(self, session: Session) -> np.ndarray:
        return first_click_distribution(self.slate(session))

    def click_probabilities(self, session: Session) -> np.ndarray:
        return slate_click_marginals(self.slate(session))
