import csv
from itertools import permutations

import numpy as np
import pytest

from multiclick.attractiveness import AttractivenessTable
from multiclick.baselines import AttractivenessPredictor, DbnPredictor, PositionPredictor, dbn_fit
from multiclick.evaluation import (MetricsReport, eval_first_click, eval_full_sequence, eval_perplexity,
                                   eval_rank, eval_relevance, eval_reverse_subset, eval_top_positions,
                                   evaluate, read_labels, reverse_subset, write_figures)
from multiclick.predictors import ClickPredictor, ThetaLookup
from multiclick.session_log import QueryFrequencyTable, Session

ADS = ("a1", "a2", "a3", "a4")
FREQ = QueryFrequencyTable({"q": 60, "r": 3})


def sess(clicks, query="q", i=0):
    return Session(f"s{i}-{query}-{clicks}", query, ADS, tuple(clicks))


class Oracle(ClickPredictor):
    """Scores the session's own click sequence highest: a perfect model."""

    name = "perfect"
    slate_only = False

    def sequence_score(self, session, seq):
        return 1.0 if tuple(seq) == session.clicks else 0.0

    def first_click_scores(self, session):
        return np.array([1.0 if session.clicks and j == session.clicks[0] else 0.0 for j in range(1, 5)])

    def click_probabilities(self, session):
        return np.array([1.0 if j in session.clicks else 0.0 for j in range(1, 5)])


class Uniform(ClickPredictor):
    name = "uniform"

    def sequence_score(self, session, seq):
        return 1.0

    def first_click_scores(self, session):
        return np.ones(session.n)

    def click_probabilities(self, session):
        return np.full(session.n, 0.5)


def am(theta=(0.2, 0.9, 0.5, 0.1)):
    table = AttractivenessTable({(q, a): t for q in "qr" for a, t in zip(ADS, theta)})
    return AttractivenessPredictor(ThetaLookup(table))


FIVE = [sess([2], i=0), sess([1, 2], i=1), sess([2, 3], i=2), sess([3, 2], "r", i=3), sess([2, 3, 1], "r", i=4)]


class TestSequenceMetrics:
    def test_pm_first_click_on_top_heavy_corpus(self):
        sessions = [sess([1], i=i) for i in range(5)] + [sess([1, 3], i=9)]
        assert eval_first_click(PositionPredictor(), sessions, FREQ)["all"] == (1.0, 6)

    def test_perfect_model(self):
        sessions = FIVE + [sess([4, 1, 3, 2], i=7)]
        assert eval_first_click(Oracle(), sessions, FREQ)["all"][0] == 1.0
        for k in (2, 3, 4):
            assert eval_full_sequence(Oracle(), sessions, FREQ, k)["all"][0] == 1.0
            mean, std, _ = eval_rank(Oracle(), sessions, FREQ, k)["all"]
            assert (mean, std) == (1.0, 0.0)

    def test_hand_counted_fixture(self):
        # AM predicts first click 2, then (2, 3), then (2, 3, 1) for three clicks.
        model = am()
        first = eval_first_click(model, FIVE, FREQ)
        assert first["all"] == (3 / 5, 5)
        assert first["50-100"] == (2 / 3, 3) and first["0-10"] == (1 / 2, 2)
        assert eval_full_sequence(model, FIVE, FREQ, 2)["all"] == (1 / 3, 3)
        assert eval_full_sequence(model, FIVE, FREQ, 3)["all"] == (1.0, 1)
        assert eval_top_positions(model, FIVE, FREQ, 2)["all"] == (2 / 3, 3)

    def test_rank_agrees_with_sorting_oracle(self):
        model = am()
        for s in FIVE:
            k = s.n_clicks
            scored = [(seq, model.sequence_score(s, seq)) for seq in permutations(range(1, 5), k)]
            order = sorted(scored, key=lambda sp: (-sp[1], sp[0]))
            expected = [seq for seq, _ in order].index(s.clicks) + 1
            assert model.rank_actual(s) == expected
        rank2 = eval_rank(model, FIVE, FREQ, 2)["all"]
        ranks = [model.rank_actual(s) for s in FIVE if s.n_clicks == 2]
        assert rank2 == (pytest.approx(np.mean(ranks)), pytest.approx(np.std(ranks)), 3)

    def test_uniform_model_rank_is_lexicographic(self):
        sessions = [sess(seq, i=i) for i, seq in enumerate(permutations(range(1, 5), 2))]
        mean, std, count = eval_rank(Uniform(), sessions, FREQ, 2)["all"]
        assert count == 12 and mean == 6.5
        for i, s in enumerate(sessions, start=1):
            assert Uniform().rank_actual(s) == i

    def test_top_positions_ignores_order(self):
        assert eval_top_positions(PositionPredictor(), [sess([2, 1])], FREQ, 2)["all"] == (1.0, 1)
        sessions = [sess(p, i=i) for i, p in enumerate(permutations(range(1, 5)))]
        assert eval_top_positions(am(), sessions, FREQ, 4)["all"] == (1.0, 24)

    def test_ordered_match_implies_set_match(self):
        rep = evaluate(am(), FIVE, FREQ)
        for k in (2, 3):
            assert rep.value("am", "full_sequence", k) <= rep.value("am", "top_positions", k)

    def test_perfect_rank_means_perfect_accuracy(self):
        rep = evaluate(Oracle(), FIVE, FREQ)
        assert rep.value("perfect", "rank", 2) == 1.0 and rep.value("perfect", "full_sequence", 2) == 1.0

    def test_model_agnostic_counts(self):
        a = evaluate(am(), FIVE, FREQ)
        b = evaluate(Uniform(), FIVE, FREQ)
        key = lambda r: (r.decile, r.metric, r.k, r.count)
        assert sorted(map(key, a.rows)) == sorted(map(key, b.rows))

    def test_accuracy_and_rank_bounds(self):
        for r in evaluate(am(), FIVE, FREQ).rows:
            if r.metric.endswith(("full_sequence", "top_positions", "first_click")):
                assert 0.0 <= r.value <= 1.0
            if r.metric.endswith("rank"):
                assert r.value >= 1.0


class TestReverseSubset:
    def test_definition(self):
        picked = reverse_subset([sess([3, 1]), sess([1, 3]), sess([1, 3, 2]), sess([])])
        assert [s.clicks for s in picked] == [(3, 1), (1, 3, 2)]

    def test_dbn_scores_zero(self):
        train = FIVE * 3
        rep = eval_reverse_subset(DbnPredictor(dbn_fit(train)), FIVE, FREQ)
        assert rep.value("dbn", "full_sequence", 2) == 0.0
        assert rep.value("dbn", "full_sequence", 3) == 0.0
        assert rep.get("dbn", "full_sequence", 2).count == 1


class TestPerplexity:
    def test_closed_forms(self):
        assert eval_perplexity(Uniform(), FIVE, FREQ) == 2.0
        assert 1.0 < eval_perplexity(Oracle(), FIVE, FREQ) < 1.0 + 1e-5

    def test_fixture(self):
        class Fixed(Uniform):
            def click_probabilities(self, session):
                return np.array([0.8, 0.2])

        s = Session("s", "q", ("a", "b"), (1,))
        assert abs(eval_perplexity(Fixed(), [s], FREQ) - 1.25) <= 1e-12


class TestRelevance:
    LABELS = {("q", "w"): 1, ("q", "x"): 1, ("q", "y"): 0, ("q", "z"): 1}
    SCORES = {"w": 0.9, "x": 0.8, "y": 0.3, "z": 0.1}

    def test_hand_oracle(self):
        pr = eval_relevance(lambda q, a: self.SCORES[a], self.LABELS)
        expected = [(1 / 3, 1.0), (2 / 3, 1.0), (2 / 3, 2 / 3), (1.0, 3 / 4)]
        for (r, p), (er, ep) in zip(zip(pr.recall, pr.precision), expected):
            assert abs(r - er) <= 1e-9 and abs(p - ep) <= 1e-9
        assert abs(pr.auc - 65 / 72) <= 1e-9

    def test_all_relevant(self):
        labels = {k: 1 for k in self.LABELS}
        assert eval_relevance(lambda q, a: self.SCORES[a], labels).auc == 1.0
        assert eval_relevance(lambda q, a: -self.SCORES[a], labels).auc == 1.0

    def test_no_positives(self):
        assert eval_relevance(lambda q, a: 1.0, {("q", "w"): 0}).undefined

    def test_reversed_scores_reverse_ranking(self):
        seen = []
        for sign in (1, -1):
            order = []

            def score(q, a, sign=sign):
                return sign * self.SCORES[a]

            pr = eval_relevance(score, self.LABELS)
            hits = [round(p * i) for i, p in enumerate(pr.precision, start=1)]
            seen.append([b - a for a, b in zip([0] + hits, hits)])
        assert seen[0] == [1, 1, 0, 1] and seen[1] == [1, 0, 1, 1]

    def test_ties_by_ad_id(self):
        pr = eval_relevance(lambda q, a: 0.5, {("q", "b"): 0, ("q", "a"): 1})
        assert pr.precision == [1.0, 0.5]

    def test_unlabeled_pairs_skipped(self):
        pr = eval_relevance(lambda q, a: self.SCORES.get(a, 0), self.LABELS, [("q", "w"), ("q", "nope"), ("q", "z")])
        assert pr.skipped == 1 and pr.evaluated == 2 and pr.auc == 1.0

    def test_label_file(self, tmp_path):
        path = tmp_path / "labels.tsv"
        path.write_text("q\tw\t1\nq\tx\t0\n")
        assert read_labels(path) == {("q", "w"): 1, ("q", "x"): 0}
        path.write_text("q\tw\tyes\n")
        with pytest.raises(ValueError):
            read_labels(path)


class TestOutput:
    def test_report_and_figures(self, tmp_path):
        rep = MetricsReport()
        rep.extend(evaluate(am(), FIVE, FREQ))
        rep.extend(evaluate(PositionPredictor(), FIVE, FREQ))
        rep.write_csv(tmp_path / "metrics.csv")
        with open(tmp_path / "metrics.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["model", "decile", "metric", "k", "value", "stddev", "count"]
        assert ["am", "all", "first_click", "1", "0.6", "", "5"] in rows
        curves = {"am": eval_relevance(lambda q, a: 1.0, {("q", "a1"): 1})}
        names = [p.name for p in write_figures(rep, curves, tmp_path)]
        assert names == ["fig3_relevance_pr.csv", "fig4_first_click.csv", "fig5_full_sequence.csv",
                         "fig6_rank.csv", "fig7_top_positions.csv", "fig8_reverse_sequence.csv",
                         "fig9_reverse_top_positions.csv"]
        assert "stddev" in (tmp_path / "fig6_rank.csv").read_text().splitlines()[0]
