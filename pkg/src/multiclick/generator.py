"""Synthetic three-week corpora sampled from known model parameters.

A scenario fixes a query universe (with weekly volumes spread over the
frequency buckets), one ad slate per query with ground-truth attractiveness
and satisfaction, and global perseverance / transition parameters. Ad copies
are synthesized from the ground-truth attractiveness afterwards so that the
word estimator has something consistent to learn from.

Calibration uses exact enumeration over a sample of slates: the perseverance
vector is solved step by step to hit target click-count fractions, and the
reverse-transition strength is bisected to hit a target share of multi-click
sessions containing a reverse pair.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import params_io
from .attractiveness import AdCopy, AttractivenessTable, write_ad_copy
from .estimation import SatisfactionTable
from .model import ModelParams, SlateParams, _walk, enumerate_sequences, sample_clicks
from .seeding import substream
from .session_log import DECILES, MAX_SLOTS, SPLIT_NAMES, Session, format_session

logger = logging.getLogger(__name__)

# Query volume relative to the 0-10 bucket, and click-count fractions per bucket.
TABLE1_VOLUME = (1.0, 0.39, 0.16, 0.37, 0.15, 1.0)
TABLE1_CLICKS = {
    "0-10": (91.6, 7.3, 1.0, 0.1),
    "10-50": (91.5, 7.3, 1.1, 0.1),
    "50-100": (92.3, 6.6, 1.0, 0.1),
    "100-500": (93.5, 5.7, 0.7, 0.1),
    "500-1000": (95.4, 4.1, 0.42, 0.08),
    ">1000": (97.94, 1.9, 0.15, 0.01),
}
TABLE2_FIRST_CLICK = (0.708, 0.163, 0.0787, 0.0503)
REVERSE_SHARE = 0.30

BUCKET_RANGES = ((1, 9), (10, 49), (50, 99), (100, 499), (500, 999), (1000, 2000))

PRESETS: dict[str, dict[str, str]] = {
    "paper-like": {
        "decile_mix": ",".join(map(str, TABLE1_VOLUME)),
        "gamma_0": ",".join(map(str, TABLE2_FIRST_CLICK)),
        "click_profile": "pooled",
        "reverse_fraction": str(REVERSE_SHARE),
        "eta_0": "0.5",
        "theta": "random",
        "theta_low": "0.2",
        "theta_high": "0.9",
        "rho_low": "0.3",
        "rho_high": "0.95",
    },
    # Frequent reverse transitions and plenty of multi-click sessions.
    "reverse-heavy": {
        "decile_mix": ",".join(map(str, TABLE1_VOLUME)),
        "gamma_0": "0.25,0.25,0.25,0.25",
        "reverse_strength": "12",
        "eta": "0.3,0.2,0.2,0.2,1.0",
        "theta": "random",
        "theta_low": "0.05",
        "theta_high": "1.0",
        "rho_low": "0.05",
        "rho_high": "0.4",
    },
    # The most attractive ad swamps the rest: first clicks are near-certain.
    "deterministic": {
        "decile_mix": ",".join(map(str, TABLE1_VOLUME)),
        "gamma_0": ",".join(map(str, TABLE2_FIRST_CLICK)),
        "reverse_strength": "1",
        "eta": "0.3,0.8,0.8,0.8,1.0",
        "theta": "one-hot",
        "rho_low": "0.5",
        "rho_high": "0.9",
    },
}

DEFAULTS = {
    "preset": "paper-like",
    "seed": "0",
    "sessions_per_week": "20000",
    "n_ads": "4",
    "theta_fixed": "0.5",
    "one_hot_floor": "1e-9",
    "calibration_slates": "32",
}

TIER_WORDS = (("plain", "listing"), ("local", "services"), ("trusted", "experts"),
              ("bonded", "insured"), ("official", "guaranteed"))


class ScenarioError(ValueError):
    pass


def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioError(f"line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ScenarioError(f"{key}: not a comma-separated list of numbers") from None


def _prob(value: float, key: str) -> float:
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ScenarioError(f"{key}: {value} is not a probability")
    return value


@dataclass
class QuerySpec:
    query: str
    weekly_count: int
    ads: tuple[str, ...]
    theta: tuple[float, ...]
    rho: tuple[float, ...]
    bucket: str


@dataclass
class Scenario:
    seed: int
    n_ads: int
    eta: np.ndarray
    gamma: np.ndarray
    queries: list[QuerySpec]
    config: dict[str, str] = field(default_factory=dict)
    label_threshold: float = 0.5

    @property
    def sessions_per_week(self) -> int:
        return sum(q.weekly_count for q in self.queries)

    def truth(self) -> ModelParams:
        theta = AttractivenessTable({(q.query, a): t for q in self.queries for a, t in zip(q.ads, q.theta)})
        rho = SatisfactionTable({(q.query, a): r for q in self.queries for a, r in zip(q.ads, q.rho)})
        return ModelParams(self.eta.copy(), self.gamma.copy(), rho, theta)

    def slate(self, q: QuerySpec) -> SlateParams:
        return SlateParams(self.eta.tolist(), self.gamma.tolist(), list(q.theta), list(q.rho))


# --- oracle summaries ---------------------------------------------------------

def click_count_distribution(slates: Iterable[SlateParams], weights: Iterable[float]) -> np.ndarray:
    """Expected fraction of sessions with exactly k clicks, mixing slates by weight."""
    out = np.zeros(MAX_SLOTS + 1)
    total = 0.0
    for slate, w in zip(slates, weights):
        for seq, p in enumerate_sequences(slate):
            out[len(seq)] += w * p
        total += w
    return out / total


def reverse_share(slates: Iterable[SlateParams], weights: Iterable[float]) -> float:
    """Expected share of multi-click sessions with an adjacent decreasing pair."""
    multi = rev = 0.0
    for slate, w in zip(slates, weights):
        for seq, p in enumerate_sequences(slate):
            if len(seq) >= 2:
                multi += w * p
                if any(b < a for a, b in zip(seq, seq[1:])):
                    rev += w * p
    return rev / multi if multi > 0 else 0.0


def transition_matrix(first: np.ndarray, strength: float, n: int) -> np.ndarray:
    """Row 0 is ``first``; row i reweights it by ``strength`` on positions above i and zeroes i."""
    g = np.zeros((n + 1, n + 1))
    g[0, 1:] = first / first.sum()
    for i in range(1, n + 1):
        w = np.array([0.0] + [first[j - 1] * (strength if j < i else 1.0) if j != i else 0.0
                              for j in range(1, n + 1)])
        g[i] = w / w.sum()
    return g


def _with(slates: list[SlateParams], eta=None, gamma=None) -> list[SlateParams]:
    return [SlateParams(eta.tolist() if eta is not None else s.eta,
                        gamma.tolist() if gamma is not None else s.gamma, s.theta, s.rho)
            for s in slates]


def _bisect(f, lo: float, hi: float, target: float, increasing: bool, iters: int = 60) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (f(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_eta(slates: list[SlateParams], weights: list[float], eta: np.ndarray,
                  fractions: tuple[float, ...]) -> np.ndarray:
    """Solve eta_1..eta_{K-1} so clicked sessions split over 1..K clicks as ``fractions``.

    P(more than k clicks | k clicks) = (1 - eta_k) * E[1 - rho of the k-th click],
    and the expectation only involves eta_0..eta_{k-1}, so each step is closed form.
    """
    fr = np.asarray(fractions, dtype=float)
    fr = fr / fr.sum()
    eta = eta.copy()
    for k in range(1, len(fr)):
        target = fr[k:].sum() / fr[k - 1:].sum()
        reach = unsatisfied = 0.0
        for slate, w in zip(_with(slates, eta=eta), weights):
            for seq, p in _walk(slate, k):
                if len(seq) == k and k < slate.n:
                    reach += w * p
                    unsatisfied += w * p * (1.0 - slate.rho[seq[-1] - 1])
        if unsatisfied <= 0.0:
            continue
        value = 1.0 - target * reach / unsatisfied
        if value < 0.0:
            logger.warning("click fraction beyond %d clicks unattainable; eta_%d set to 0", k, k)
        eta[k] = min(max(value, 0.0), 1.0)
    return eta


def calibrate_reverse(slates: list[SlateParams], weights: list[float], first: np.ndarray,
                      target: float, n: int) -> float:
    share = lambda s: reverse_share(_with(slates, gamma=transition_matrix(first, s, n)), weights)
    lo, hi = 1e-3, 1e3
    # The reachable band depends on the drawn slates; settle for its nearest edge.
    floor, ceiling = share(lo), share(hi)
    if target < floor or target > ceiling:
        edge = lo if target < floor else hi
        logger.warning("reverse share %.3f outside the reachable range [%.3f, %.3f]; using %.3f",
                       target, floor, ceiling, share(edge))
        return edge
    return math.exp(_bisect(lambda x: share(math.exp(x)), math.log(lo), math.log(hi), target,
                            increasing=True, iters=40))


# --- scenario -------------------------------------------------------------------

def resolve_config(config: dict[str, str] | None = None) -> dict[str, str]:
    config = dict(config or {})
    preset = config.get("preset", DEFAULTS["preset"])
    if preset != "custom" and preset not in PRESETS:
        raise ScenarioError(f"unknown preset {preset!r}")
    merged = dict(DEFAULTS)
    merged.update(PRESETS.get(preset, {}))
    merged.update(config)
    return merged


def _query_universe(cfg: dict[str, str], rng: np.random.Generator) -> list[tuple[str, int, str]]:
    total = int(cfg["sessions_per_week"])
    if total < 0:
        raise ScenarioError("sessions_per_week must be non-negative")
    mix = _floats(cfg["decile_mix"], "decile_mix")
    if len(mix) != len(DECILES) or any(m < 0 for m in mix) or sum(mix) <= 0:
        raise ScenarioError("decile_mix needs six non-negative weights")
    out = []
    for bucket, share, (lo, hi) in zip(DECILES, mix, BUCKET_RANGES):
        target = total * share / sum(mix)
        for _ in range(int(round(target / ((lo + hi) / 2)))):
            out.append((f"q{len(out):05d}", int(rng.integers(lo, hi + 1)), bucket))
    return out


def build_scenario(config: dict[str, str] | None = None) -> Scenario:
    cfg = resolve_config(config)
    seed = int(cfg["seed"])
    n = int(cfg["n_ads"])
    if not 1 <= n <= MAX_SLOTS:
        raise ScenarioError(f"n_ads must be in 1..{MAX_SLOTS}")
    rng = substream(seed, "scenario")

    first = np.array([_prob(x, "gamma_0") for x in _floats(cfg["gamma_0"], "gamma_0")])
    if len(first) != n or first.sum() <= 0:
        raise ScenarioError(f"gamma_0 needs {n} non-negative entries with positive sum")

    mode = cfg["theta"]
    lo_t, hi_t = (_prob(float(cfg.get(k, d)), k) for k, d in (("theta_low", 0.1), ("theta_high", 0.9)))
    lo_r, hi_r = _prob(float(cfg["rho_low"]), "rho_low"), _prob(float(cfg["rho_high"]), "rho_high")
    queries = []
    for name, count, bucket in _query_universe(cfg, rng):
        if mode == "random":
            theta = rng.uniform(lo_t, hi_t, n)
        elif mode == "fixed":
            theta = np.full(n, _prob(float(cfg["theta_fixed"]), "theta_fixed"))
        elif mode == "one-hot":
            theta = np.full(n, float(cfg["one_hot_floor"]))
            theta[rng.integers(n)] = 1.0
        else:
            raise ScenarioError(f"unknown theta mode {mode!r}")
        rho = rng.uniform(lo_r, hi_r, n)
        ads = tuple(f"ad{name[1:]}x{k}" for k in range(1, n + 1))
        queries.append(QuerySpec(name, count, ads, tuple(theta.tolist()), tuple(rho.tolist()), bucket))

    # Calibration runs on a per-bucket sample of slates reweighted to the bucket's volume.
    per_bucket = int(cfg["calibration_slates"])
    sample, weights = [], []
    for bucket in DECILES:
        members = [q for q in queries if q.bucket == bucket]
        picked = members[::max(1, len(members) // per_bucket)][:per_bucket]
        if picked:
            scale = sum(q.weekly_count for q in members) / sum(q.weekly_count for q in picked)
            sample += picked
            weights += [q.weekly_count * scale for q in picked]
    eta = np.full(n + 1, 0.5)
    eta[0] = _prob(float(cfg.get("eta_0", 0.5)), "eta_0")
    eta[n] = 1.0
    if "eta" in cfg:
        given = [_prob(x, "eta") for x in _floats(cfg["eta"], "eta")]
        if len(given) != n + 1:
            raise ScenarioError(f"eta needs {n + 1} entries")
        eta = np.array(given)
    strength = float(cfg.get("reverse_strength", 1.0))
    gamma = transition_matrix(first, strength, n)
    scenario = Scenario(seed, n, eta, gamma, queries, cfg,
                        float(cfg.get("label_rho_threshold", (lo_r + hi_r) / 2)))
    if not sample:
        return scenario

    slates = [scenario.slate(q) for q in sample]
    profile = cfg.get("click_profile")
    fractions = None
    if profile and "eta" not in cfg:
        if profile == "pooled":
            mix = _floats(cfg["decile_mix"], "decile_mix")
            fractions = tuple(sum(m * TABLE1_CLICKS[d][k] for m, d in zip(mix, DECILES)) for k in range(4))
        elif profile in TABLE1_CLICKS:
            fractions = TABLE1_CLICKS[profile]
        else:
            raise ScenarioError(f"unknown click_profile {profile!r}")
        fractions = fractions[:n]
        eta = calibrate_eta(slates, weights, eta, fractions)
    if "reverse_fraction" in cfg and n > 1:
        target = float(cfg["reverse_fraction"])
        for _ in range(2):
            strength = calibrate_reverse(_with(slates, eta=eta), weights, first, target, n)
            if fractions is not None:
                eta = calibrate_eta(_with(slates, gamma=transition_matrix(first, strength, n)),
                                    weights, eta, fractions)
        gamma = transition_matrix(first, strength, n)
    scenario.eta, scenario.gamma = eta, gamma
    scenario.config = dict(cfg, reverse_strength=repr(strength))
    return scenario


def synthesize_ad_copy(q: QuerySpec, k: int, theta_low: float, theta_high: float) -> AdCopy:
    """Copy whose shared tier words track the ad's attractiveness."""
    span = max(theta_high - theta_low, 1e-12)
    rel = min(max((q.theta[k] - theta_low) / span, 0.0), 1.0)
    tier = TIER_WORDS[min(int(rel * len(TIER_WORDS)), len(TIER_WORDS) - 1)]
    brand = f"brand{q.ads[k]}"
    return AdCopy(q.ads[k], (brand, tier[0], q.query), ("the", tier[1], "for", "you"),
                  f"www.{brand}.com")


# --- corpus -------------------------------------------------------------------

@dataclass
class CorpusFiles:
    directory: Path
    counts: dict[str, int]

    def path(self, name: str) -> Path:
        return self.directory / f"{name}.tsv"


def sample_week(scenario: Scenario, week: str) -> Iterable[Session]:
    """Sessions of one week, query by query, from the week's own random stream."""
    rng = substream(scenario.seed, f"week:{week}")
    for q in scenario.queries:
        slate = scenario.slate(q)
        for i in range(q.weekly_count):
            clicks, _ = sample_clicks(slate, rng)
            yield Session(f"{week}-{q.query}-{i:05d}", q.query, q.ads, clicks)


def generate_corpus(scenario: Scenario, out_dir: str | Path, weeks=SPLIT_NAMES) -> CorpusFiles:
    """Write the weekly logs, ad copies, relevance labels and the ground-truth sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for week in weeks:
        with open(out / f"{week}.tsv", "w", encoding="utf-8", newline="\n") as fh:
            n = 0
            for s in sample_week(scenario, week):
                fh.write(format_session(s) + "\n")
                n += 1
        counts[week] = n
    lo_t = float(scenario.config.get("theta_low", 0.1))
    hi_t = float(scenario.config.get("theta_high", 0.9))
    with open(out / "ads.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for q in scenario.queries:
            for k in range(len(q.ads)):
                write_ad_copy(fh, synthesize_ad_copy(q, k, lo_t, hi_t))
    with open(out / "labels.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for q in scenario.queries:
            for a, r in zip(q.ads, q.rho):
                fh.write(f"{q.query}\t{a}\t{int(r >= scenario.label_threshold)}\n")
    params_io.save_model(out / "truth.tsv", scenario.truth(), name="truth")
    with open(out / "scenario.txt", "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(scenario.config):
            fh.write(f"{key} = {scenario.config[key]}\n")
    return CorpusFiles(out, counts)
