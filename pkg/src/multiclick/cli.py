"""Command-line front end: generate, train, eval, stats and predict.

Every command reads a flat ``key = value`` config, takes its seed from the
config or ``--seed``, and writes only under ``--out``. Failures print one
tab-separated line (``error<TAB>kind<TAB>message``) to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import params_io
from .attractiveness import (FREQUENT_QUERY_THRESHOLD, AdCopy, AttractivenessTable, WordStats,
                             build_attractiveness_table, build_word_stats, read_ad_copies)
from .baselines import (DBN_LAMBDA, AttractivenessPredictor, DbnParams, DbnPredictor, IcmPredictor,
                        PositionParams, PositionPredictor, dbn_fit, pm_fit)
from .estimation import DEFAULT_PRIOR_MASS, accumulate_stats, fit_priors
from .evaluation import MetricRow, MetricsReport, eval_relevance, evaluate, read_labels, write_figures
from .generator import ScenarioError, build_scenario, generate_corpus, read_config
from .model import argmax_sequence, fit, rank_of
from .predictors import ClickPredictor, ModelPredictor, ThetaLookup
from .session_log import (DECILES, MAINLINE_SLOTS, LogFormatError, QueryFrequencyTable, Session,
                          click_distance_histogram, multi_click_stats, read_sessions)

logger = logging.getLogger("multiclick")

MODELS = ("ours", "dbn", "icm", "pm", "am")
# Models whose parameters include per-ad attractiveness and satisfaction.
RELEVANCE_MODELS = ("ours", "dbn")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    out: Path = Path("out")
    corpus: Path | None = None
    ads: Path | None = None
    labels: Path | None = None
    sessions: Path | None = None
    n_max: int = MAINLINE_SLOTS
    prior_mass: float = DEFAULT_PRIOR_MASS
    freq_threshold: int = FREQUENT_QUERY_THRESHOLD
    dbn_lambda: float = DBN_LAMBDA
    rho_smoothing: float = 0.0
    rho_prior: float = 0.5
    seed: int = 0
    generator: dict[str, str] = field(default_factory=dict)

    _PATHS = ("corpus", "ads", "labels", "sessions")
    _NUMBERS = {"n_max": int, "prior_mass": float, "freq_threshold": int, "dbn_lambda": float,
                "rho_smoothing": float, "rho_prior": float, "seed": int}

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "RunConfig":
        cfg = cls()
        for key, raw in values.items():
            if key == "out":
                cfg.out = Path(raw)
            elif key in cls._PATHS:
                setattr(cfg, key, Path(raw))
            elif key in cls._NUMBERS:
                try:
                    setattr(cfg, key, cls._NUMBERS[key](raw))
                except ValueError:
                    raise ConfigError(f"{key}: cannot parse {raw!r}") from None
            else:
                cfg.generator[key] = raw
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 1 <= self.n_max <= 8:
            raise ConfigError("n_max must be in 1..8")
        if self.prior_mass <= 0:
            raise ConfigError("prior_mass must be positive")
        if self.freq_threshold < 1:
            raise ConfigError("freq_threshold must be positive")
        if not 0.0 < self.dbn_lambda <= 1.0:
            raise ConfigError("dbn_lambda must be in (0, 1]")
        if self.rho_smoothing < 0 or not 0.0 <= self.rho_prior <= 1.0:
            raise ConfigError("rho_smoothing must be >= 0 and rho_prior a probability")

    @property
    def corpus_dir(self) -> Path:
        return self.corpus or self.out / "corpus"

    @property
    def ads_path(self) -> Path:
        return self.ads or self.corpus_dir / "ads.tsv"

    @property
    def labels_path(self) -> Path:
        return self.labels or self.corpus_dir / "labels.tsv"

    @property
    def models_dir(self) -> Path:
        return self.out / "models"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _split(cfg: RunConfig, name: str) -> list[Session]:
    return read_sessions(_require(cfg.corpus_dir / f"{name}.tsv", f"{name} log"))


def _copies(cfg: RunConfig) -> dict[str, AdCopy]:
    if cfg.ads is None and not cfg.ads_path.exists():
        logger.warning("no ad copy file at %s; attractiveness falls back to its default", cfg.ads_path)
        return {}
    return read_ad_copies(_require(cfg.ads_path, "ad copy file"))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- commands -------------------------------------------------------------------

def cmd_generate(cfg: RunConfig) -> Path:
    scenario = build_scenario(dict(cfg.generator, seed=str(cfg.seed), n_ads=cfg.generator.get("n_ads", str(cfg.n_max))))
    files = generate_corpus(scenario, cfg.corpus_dir)
    logger.info("wrote %s sessions to %s", files.counts, files.directory)
    return files.directory


def cmd_train(cfg: RunConfig, models=MODELS) -> dict[str, Path]:
    priors, train = _split(cfg, "priors"), _split(cfg, "train")
    out = cfg.models_dir
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    theta = None
    if "ours" in models or "am" in models:
        copies = _copies(cfg)
        freq = QueryFrequencyTable.from_sessions(train)
        words = build_word_stats(train, copies, freq, cfg.freq_threshold)
        with open(out / "word_stats.tsv", "w", encoding="utf-8", newline="\n") as fh:
            words.dump(fh)
        pairs = sorted({(s.query, a) for s in train for a in s.ads})
        theta = build_attractiveness_table(pairs, copies, words)
    if "ours" in models:
        stats = accumulate_stats(train, cfg.n_max)
        if stats.rejected:
            logger.warning("%d training sessions exceed n_max=%d and were skipped", stats.rejected, cfg.n_max)
        params = fit(stats, fit_priors(priors, cfg.n_max, cfg.prior_mass), theta,
                     cfg.rho_smoothing, cfg.rho_prior)
        params_io.save_model(out / "ours.tsv", params)
        params_io.save(out / "stats.tsv", "counters", params_io.stats_records(stats))
        written["ours"] = out / "ours.tsv"
    if "dbn" in models or "icm" in models:
        dbn = dbn_fit(train, cfg.dbn_lambda)
        if "dbn" in models:
            params_io.save(out / "dbn.tsv", "dbn", dbn.records())
            written["dbn"] = out / "dbn.tsv"
        if "icm" in models:
            icm = DbnParams(dbn.theta, {}, 1.0, dbn.default_theta, 0.0)
            params_io.save(out / "icm.tsv", "icm", icm.records())
            written["icm"] = out / "icm.tsv"
    if "pm" in models:
        params_io.save(out / "pm.tsv", "pm", pm_fit(train, cfg.n_max).records())
        written["pm"] = out / "pm.tsv"
    if "am" in models:
        records = [("theta_default", theta.default)]
        records += [("theta", q, a, v) for (q, a), v in sorted(theta.values.items())]
        params_io.save(out / "am.tsv", "am", records)
        written["am"] = out / "am.tsv"
    return written


def _word_stats(cfg: RunConfig) -> WordStats | None:
    path = cfg.models_dir / "word_stats.tsv"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return WordStats.load(fh, cfg.freq_threshold)


def load_predictor(cfg: RunConfig, name: str, copies=None, words=None) -> ClickPredictor:
    path = _require(cfg.models_dir / f"{name}.tsv", f"{name} parameters")
    if name == "ours":
        return ModelPredictor(params_io.load_model(path), words, copies)
    kind, rows = params_io.load(path)
    if name == "dbn":
        return DbnPredictor(DbnParams.from_records(rows))
    if name == "icm":
        return IcmPredictor(DbnParams.from_records(rows))
    if name == "pm":
        return PositionPredictor(PositionParams.from_records(rows))
    if name == "am":
        table = AttractivenessTable()
        for r in rows:
            if r[0] == "theta_default":
                table.default = float(r[1])
            elif r[0] == "theta":
                table.values[(r[1], r[2])] = float(r[3])
        return AttractivenessPredictor(ThetaLookup(table, words, copies))
    raise ConfigError(f"unknown model {name!r}")


def _relevance_score(predictor: ClickPredictor):
    if isinstance(predictor, ModelPredictor):
        rho = predictor.params.rho
        return lambda q, a: predictor.theta(q, a) * rho.get(q, a)
    p = predictor.params
    return lambda q, a: p.theta.get((q, a), p.default_theta) * p.rho.get((q, a), p.default_rho)


def cmd_eval(cfg: RunConfig, models=MODELS) -> MetricsReport:
    train, test = _split(cfg, "train"), _split(cfg, "test")
    freq = QueryFrequencyTable.from_sessions(train)
    copies, words = _copies(cfg), _word_stats(cfg)
    labels = None
    if cfg.labels is not None or cfg.labels_path.exists():
        labels = read_labels(_require(cfg.labels_path, "label file"))
    report, curves = MetricsReport(), {}
    for name in models:
        predictor = load_predictor(cfg, name, copies, words)
        report.extend(evaluate(predictor, test, freq))
        if labels is not None and name in RELEVANCE_MODELS:
            curve = eval_relevance(_relevance_score(predictor), labels)
            curves[name] = curve
            report.rows.append(MetricRow(name, "all", "relevance_auc", None, curve.auc, None, curve.evaluated))
    out = cfg.out / "report"
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "metrics.csv")
    write_figures(report, curves, out)
    return report


def cmd_stats(cfg: RunConfig) -> Path:
    """Click-count fractions per decile and the consecutive-click distance histogram."""
    if cfg.sessions is not None:
        sessions = read_sessions(_require(cfg.sessions, "session file"))
        freq = QueryFrequencyTable.from_sessions(sessions)
    else:
        sessions = _split(cfg, "test")
        freq = QueryFrequencyTable.from_sessions(_split(cfg, "train"))
    out = cfg.out / "stats"
    out.mkdir(parents=True, exist_ok=True)
    table = multi_click_stats(sessions, freq, cfg.n_max)
    rows = []
    for decile in ("all", *DECILES):
        entry = table[decile]
        for k, count in entry.counts.items():
            frac = entry.fractions[k]
            rows.append((decile, k, repr(frac), count, entry.clicked))
    _write_csv(out / "table1_click_counts.csv", ("decile", "clicks", "fraction", "count", "clicked_sessions"), rows)
    hist = click_distance_histogram(sessions, cfg.n_max)
    _write_csv(out / "fig1_click_distance.csv", ("distance", "fraction", "pairs"),
               [(int(d), repr(float(m)), hist.pairs) for d, m in zip(hist.distances, hist.mass)])
    return out


def cmd_predict(cfg: RunConfig, models=MODELS) -> dict[str, Path]:
    """Per-session predicted first click, predicted sequence and rank of the actual one."""
    sessions = read_sessions(_require(cfg.sessions, "session file") if cfg.sessions else
                             _require(cfg.corpus_dir / "test.tsv", "test log"))
    copies, words = _copies(cfg), _word_stats(cfg)
    out = cfg.out / "predictions"
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name in models:
        predictor = load_predictor(cfg, name, copies, words)
        rows = []
        for s in sessions:
            if s.n_clicks == 0:
                rows.append((s.session_id, predictor.predict_first_click(s), "", ""))
                continue
            scored = predictor.scored_sequences(s, s.n_clicks)
            seq = argmax_sequence(scored)
            rows.append((s.session_id, predictor.predict_first_click(s), ",".join(map(str, seq)),
                         rank_of(scored, s.clicks)))
        path = out / f"{name}.tsv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(("session_id", "first_click", "sequence", "actual_rank"))
            w.writerows(rows)
        written[name] = path
    return written


# --- entry point ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multiclick", description="Multi-click model for sponsored search logs.")
    p.add_argument("command", choices=("generate", "train", "eval", "stats", "predict"))
    p.add_argument("sessions", nargs="?", help="session file for stats / predict")
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--model", choices=(*MODELS, "all"), default="all")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    values = read_config(_require(args.config, "config file")) if args.config else {}
    cfg = RunConfig.from_mapping(values)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.sessions:
        cfg.sessions = Path(args.sessions)
    models = MODELS if args.model == "all" else (args.model,)
    if args.command == "generate":
        cmd_generate(cfg)
    elif args.command == "train":
        cmd_train(cfg, models)
    elif args.command == "eval":
        cmd_eval(cfg, models)
    elif args.command == "stats":
        cmd_stats(cfg)
    else:
        cmd_predict(cfg, models)
    return 0


def _error_kind(exc: Exception) -> tuple[str, int]:
    if isinstance(exc, (ConfigError, ScenarioError)):
        return "config", 2
    if isinstance(exc, FileNotFoundError):
        return "missing-input", 1
    if isinstance(exc, LogFormatError):
        return "log-format", 1
    return "failed", 1


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ValueError, OSError) as exc:
        kind, code = _error_kind(exc)
        print(f"error\t{kind}\t{' '.join(str(exc).split())}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
