"""Comparison models: DBN, ICM, position model (PM) and attractiveness model (AM).

DBN and ICM are forward cascades: positions are examined top to bottom, so any
sequence with a decreasing adjacent pair has probability zero.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .predictors import ClickPredictor, ThetaLookup
from .session_log import MAINLINE_SLOTS, Session

DBN_LAMBDA = 0.01
_PL_FLOOR = 1e-12


def cascade_sequence_probability(theta: Sequence[float], rho: Sequence[float], lam: float,
                                 clicks: Sequence[int]) -> float:
    """Probability of exactly this click pattern under a cascade with perseverance ``lam``.

    Position 1 is always examined. After position i the next one is examined
    with probability ``lam * (1 - rho_i)`` if i was clicked, ``lam`` otherwise.
    """
    if any(b <= a for a, b in zip(clicks, clicks[1:])):
        return 0.0
    n = len(theta)
    # no_click[i]: P(no click at positions i..n | position i examined)
    no_click = [1.0] * (n + 2)
    for i in range(n, 0, -1):
        no_click[i] = (1.0 - theta[i - 1]) * ((1.0 - lam) + lam * no_click[i + 1])
    if not clicks:
        return no_click[1]
    clicked = set(clicks)
    last = clicks[-1]
    prob = 1.0
    for i in range(1, last + 1):
        prob *= theta[i - 1] if i in clicked else 1.0 - theta[i - 1]
        if i < last:
            prob *= lam * (1.0 - rho[i - 1]) if i in clicked else lam
    go_on = lam * (1.0 - rho[last - 1])
    return prob * ((1.0 - go_on) + go_on * no_click[last + 1])


def cascade_marginals(theta: Sequence[float], rho: Sequence[float], lam: float) -> np.ndarray:
    examined = 1.0
    q = np.zeros(len(theta))
    for i, (t, r) in enumerate(zip(theta, rho)):
        q[i] = examined * t
        examined *= lam * (t * (1.0 - r) + (1.0 - t))
    return q


@dataclass
class DbnParams:
    theta: dict[tuple[str, str], float] = field(default_factory=dict)
    rho: dict[tuple[str, str], float] = field(default_factory=dict)
    lam: float = DBN_LAMBDA
    default_theta: float = 0.5
    default_rho: float = 0.5

    def slate(self, session: Session) -> tuple[list[float], list[float]]:
        keys = [(session.query, a) for a in session.ads]
        return ([self.theta.get(k, self.default_theta) for k in keys],
                [self.rho.get(k, self.default_rho) for k in keys])

    def records(self):
        yield ("lambda", self.lam)
        yield ("theta_default", self.default_theta)
        yield ("rho_default", self.default_rho)
        for (q, a), v in sorted(self.theta.items()):
            yield ("theta", q, a, v)
        for (q, a), v in sorted(self.rho.items()):
            yield ("rho", q, a, v)

    @classmethod
    def from_records(cls, rows: list[list[str]]) -> "DbnParams":
        p = cls()
        for r in rows:
            if r[0] == "lambda":
                p.lam = float(r[1])
            elif r[0] == "theta_default":
                p.default_theta = float(r[1])
            elif r[0] == "rho_default":
                p.default_rho = float(r[1])
            elif r[0] in ("theta", "rho"):
                getattr(p, r[0])[(r[1], r[2])] = float(r[3])
            else:
                raise ValueError(f"unknown DBN parameter {r[0]!r}")
        return p


def dbn_fit(sessions: Iterable[Session], lam: float = DBN_LAMBDA) -> DbnParams:
    """Counting estimates with add-one smoothing.

    theta: (clicks + 1) / (impressions + 2); rho: (last clicks + 1) / (clicks + 2).
    """
    shown, clicks, last = Counter(), Counter(), Counter()
    for s in sessions:
        for a in s.ads:
            shown[(s.query, a)] += 1
        for c in s.clicks:
            clicks[(s.query, s.ads[c - 1])] += 1
        if s.clicks:
            last[(s.query, s.ads[s.clicks[-1] - 1])] += 1
    theta = {d: (clicks[d] + 1) / (n + 2) for d, n in shown.items()}
    rho = {d: (last[d] + 1) / (clicks[d] + 2) for d in shown}
    return DbnParams(theta, rho, lam)


def dbn_sequence_probability(params: DbnParams, session: Session, clicks: Sequence[int]) -> float:
    theta, rho = params.slate(session)
    return cascade_sequence_probability(theta, rho, params.lam, tuple(clicks))


class DbnPredictor(ClickPredictor):
    name = "dbn"

    def __init__(self, params: DbnParams):
        self.params = params

    def _slate(self, session):
        return self.params.slate(session)

    def sequence_score(self, session, seq):
        theta, rho = self._slate(session)
        return cascade_sequence_probability(theta, rho, self.params.lam, seq)

    def first_click_scores(self, session):
        # Ranked by each position's click marginal under the forward chain.
        return self.click_probabilities(session)

    def click_probabilities(self, session):
        theta, rho = self._slate(session)
        return cascade_marginals(theta, rho, self.params.lam)


class IcmPredictor(DbnPredictor):
    """Cascade with perseverance one and no satisfaction: clicks are independent."""

    name = "icm"

    def __init__(self, params: DbnParams):
        super().__init__(DbnParams(params.theta, {}, 1.0, params.default_theta, 0.0))

    def _slate(self, session):
        theta, _ = self.params.slate(session)
        return theta, [0.0] * len(theta)

    def predict_sequence(self, session, k=None):
        # Top-k by click rate, emitted in increasing position order.
        k = session.n_clicks if k is None else k
        theta, _ = self._slate(session)
        order = sorted(range(1, session.n + 1), key=lambda j: (-theta[j - 1], j))
        return tuple(sorted(order[:k]))


def icm_sequence_probability(params: DbnParams, session: Session, clicks: Sequence[int]) -> float:
    theta, _ = params.slate(session)
    return cascade_sequence_probability(theta, [0.0] * len(theta), 1.0, tuple(clicks))


@dataclass
class PositionParams:
    ctr: list[float] = field(default_factory=lambda: [0.0] * MAINLINE_SLOTS)

    def records(self):
        for j, v in enumerate(self.ctr, start=1):
            yield ("ctr", j, v)

    @classmethod
    def from_records(cls, rows):
        ctr = {int(r[1]): float(r[2]) for r in rows if r[0] == "ctr"}
        return cls([ctr[j] for j in sorted(ctr)])


def pm_fit(sessions: Iterable[Session], n_max: int = MAINLINE_SLOTS) -> PositionParams:
    shown = np.zeros(n_max)
    clicked = np.zeros(n_max)
    for s in sessions:
        shown[: s.n] += 1
        for c in s.clicks:
            clicked[c - 1] += 1
    ctr = np.divide(clicked, shown, out=np.zeros(n_max), where=shown > 0)
    return PositionParams(ctr.tolist())


class PositionPredictor(ClickPredictor):
    """Clicks follow the displayed order: first click at 1, second at 2, and so on.

    Every sequence scores the same, so the lexicographic tie-break alone orders
    them and (1, ..., k) always comes first.
    """

    name = "pm"

    def __init__(self, params: PositionParams | None = None):
        self.params = params or PositionParams()

    def sequence_score(self, session, seq):
        return 1.0

    def first_click_scores(self, session):
        return np.ones(session.n)

    def click_probabilities(self, session):
        ctr = self.params.ctr
        return np.array([ctr[j] if j < len(ctr) else 0.0 for j in range(session.n)])


def pm_predict(session: Session, k: int) -> tuple[int, ...]:
    return tuple(range(1, k + 1))


def plackett_luce(weights: Sequence[float], seq: Sequence[int]) -> float:
    w = [max(x, _PL_FLOOR) for x in weights]
    remaining = sum(w)
    prob = 1.0
    for pos in seq:
        prob *= w[pos - 1] / remaining
        remaining -= w[pos - 1]
    return prob


class AttractivenessPredictor(ClickPredictor):
    """Most attractive ad is clicked first, then the next most attractive, and so on.

    Sequences are scored by a Plackett-Luce draw over attractiveness, whose mode
    is exactly the decreasing-attractiveness order.
    """

    name = "am"

    def __init__(self, theta: ThetaLookup):
        self.theta = theta

    def sequence_score(self, session, seq):
        return plackett_luce(self.theta.vector(session), seq)

    def first_click_scores(self, session):
        return np.array(self.theta.vector(session))

    def click_probabilities(self, session):
        return np.array(self.theta.vector(session))


def am_predict(theta: Sequence[float], k: int) -> tuple[int, ...]:
    order = sorted(range(1, len(theta) + 1), key=lambda j: (-theta[j - 1], j))
    return tuple(order[:k])
