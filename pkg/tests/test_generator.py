import math

import numpy as np
import pytest

from multiclick import params_io
from multiclick.generator import (PRESETS, TABLE1_CLICKS, TABLE2_FIRST_CLICK, ScenarioError, build_scenario,
                                  click_count_distribution, generate_corpus, read_config, reverse_share,
                                  sample_week, transition_matrix)
from multiclick.model import SlateParams
from multiclick.session_log import CorpusSplit, multi_click_stats, read_sessions


@pytest.fixture(scope="module")
def paper_like():
    return build_scenario({"sessions_per_week": "60000", "seed": "3"})


class TestScenario:
    def test_first_click_row(self, paper_like):
        assert paper_like.gamma[0, 1:] == pytest.approx(TABLE2_FIRST_CLICK, abs=1e-12)

    def test_same_seed_same_scenario(self):
        a = build_scenario({"sessions_per_week": "3000", "seed": "9"})
        b = build_scenario({"sessions_per_week": "3000", "seed": "9"})
        assert a.queries == b.queries
        assert np.array_equal(a.eta, b.eta) and np.array_equal(a.gamma, b.gamma)
        c = build_scenario({"sessions_per_week": "3000", "seed": "10"})
        assert c.queries != a.queries

    def test_valid_probabilities(self, paper_like):
        assert ((paper_like.eta >= 0) & (paper_like.eta <= 1)).all()
        assert np.allclose(paper_like.gamma[:, 1:].sum(axis=1), 1.0)
        for q in paper_like.queries:
            assert q.weekly_count > 0
            assert all(0 <= t <= 1 for t in q.theta) and all(0 <= r <= 1 for r in q.rho)

    def test_volume_covers_every_bucket(self, paper_like):
        assert {q.bucket for q in paper_like.queries} == set(TABLE1_CLICKS)

    @pytest.mark.parametrize("config", [{"eta_0": "1.5"}, {"gamma_0": "0.5,-0.1,0.3,0.3"}, {"preset": "nope"},
                                        {"theta": "weird"}, {"gamma_0": "0.5,0.5"}, {"rho_low": "abc"},
                                        {"sessions_per_week": "-4"}])
    def test_config_errors(self, config):
        with pytest.raises((ScenarioError, ValueError)):
            build_scenario(dict(config, sessions_per_week=config.get("sessions_per_week", "500")))

    def test_reverse_share_oracle(self, paper_like):
        slates = [paper_like.slate(q) for q in paper_like.queries]
        weights = [q.weekly_count for q in paper_like.queries]
        assert reverse_share(slates, weights) == pytest.approx(0.30, abs=0.03)

    def test_reverse_share_controlled_by_gamma(self):
        first = np.array(TABLE2_FIRST_CLICK)
        shares = []
        for strength in (0.1, 1.0, 10.0):
            slate = SlateParams([0.4, 0.3, 0.3, 0.3, 1.0], transition_matrix(first, strength, 4).tolist(),
                                [0.5] * 4, [0.3] * 4)
            shares.append(reverse_share([slate], [1.0]))
        assert shares[0] < shares[1] < shares[2]

    def test_transition_matrix(self):
        g = transition_matrix(np.array([0.4, 0.3, 0.2, 0.1]), 2.0, 4)
        assert np.diag(g)[1:].tolist() == [0.0] * 4
        assert g[3, 1] / g[3, 4] == pytest.approx(2.0 * 0.4 / 0.1)


class TestCorpus:
    def test_zero_sessions(self, tmp_path):
        scenario = build_scenario({"sessions_per_week": "0"})
        files = generate_corpus(scenario, tmp_path)
        assert files.counts == {"priors": 0, "train": 0, "test": 0}
        assert read_sessions(files.path("train")) == []

    def test_files_and_determinism(self, tmp_path):
        scenario = build_scenario({"sessions_per_week": "2000", "seed": "4"})
        a = generate_corpus(scenario, tmp_path / "a")
        b = generate_corpus(build_scenario({"sessions_per_week": "2000", "seed": "4"}), tmp_path / "b")
        for name in ("priors.tsv", "train.tsv", "test.tsv", "ads.tsv", "labels.tsv", "truth.tsv", "scenario.txt"):
            assert (a.directory / name).read_bytes() == (b.directory / name).read_bytes(), name
        split = CorpusSplit.load(a.directory)
        assert len(split.train) == scenario.sessions_per_week

    def test_truth_sidecar(self, tmp_path):
        scenario = build_scenario({"sessions_per_week": "1500"})
        generate_corpus(scenario, tmp_path)
        truth = params_io.load_model(tmp_path / "truth.tsv")
        assert np.array_equal(truth.eta, scenario.eta) and np.array_equal(truth.gamma, scenario.gamma)
        q = scenario.queries[0]
        assert truth.theta.get(q.query, q.ads[0]) == q.theta[0]

    def test_scenario_file_reloads(self, tmp_path):
        scenario = build_scenario({"sessions_per_week": "1500", "seed": "2"})
        generate_corpus(scenario, tmp_path)
        again = build_scenario(read_config(tmp_path / "scenario.txt"))
        assert again.queries == scenario.queries
        assert np.allclose(again.gamma, scenario.gamma)

    def test_weeks_are_independent_streams(self):
        scenario = build_scenario({"sessions_per_week": "1500"})
        train = [s.clicks for s in sample_week(scenario, "train")]
        test = [s.clicks for s in sample_week(scenario, "test")]
        assert train != test


class TestCalibration:
    def test_click_fractions_match_oracle(self, paper_like):
        slates = [paper_like.slate(q) for q in paper_like.queries]
        weights = [q.weekly_count for q in paper_like.queries]
        expected = click_count_distribution(slates, weights)
        sessions = list(sample_week(paper_like, "train"))
        total = len(sessions)
        for k in range(5):
            observed = sum(s.n_clicks == k for s in sessions)
            sigma = math.sqrt(total * expected[k] * (1 - expected[k]))
            assert abs(observed - total * expected[k]) <= 3 * sigma + 1e-9, k

    def test_empirical_reverse_share(self, paper_like):
        multi = [s for s in sample_week(paper_like, "test") if s.n_clicks >= 2]
        share = sum(s.has_reverse_pair() for s in multi) / len(multi)
        assert share == pytest.approx(0.30, abs=0.05)

    def test_top_bucket_profile(self):
        scenario = build_scenario({"sessions_per_week": "200000", "click_profile": ">1000",
                                   "reverse_fraction": "0.3", "seed": "1"})
        fractions = multi_click_stats(sample_week(scenario, "train"))["all"].fractions
        target = TABLE1_CLICKS[">1000"]
        for k in range(1, 5):
            assert abs(100 * fractions[k] - target[k - 1]) <= 1.0, k

    def test_presets_exist(self):
        assert {"paper-like", "reverse-heavy", "deterministic"} <= set(PRESETS)


def test_unreachable_reverse_share_clamps_to_edge(caplog):
    # Seed 1's draw tops out just under a 30% reverse share.
    scenario = build_scenario({"seed": "1"})
    assert float(scenario.config["reverse_strength"]) == pytest.approx(1e3)
    assert "outside the reachable range" in caplog.text


def test_reverse_share_above_ceiling_does_not_raise():
    scenario = build_scenario({"reverse_fraction": "0.99", "sessions_per_week": "2000"})
    assert float(scenario.config["reverse_strength"]) == pytest.approx(1e3)
