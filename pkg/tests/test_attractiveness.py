import io

import pytest
from hypothesis import given, strategies as st

from multiclick.attractiveness import (GLOBAL_SCOPE, STOP_WORDS, AdCopy, WordStats, build_attractiveness_table,
                                       build_word_stats, estimate_theta, read_ad_copies, tokenize,
                                       write_ad_copy)
from multiclick.session_log import QueryFrequencyTable, Session

# The display URL is always a word, so "a" / "c" double as URL tokens to get
# word sets {a, b} and {b, c}. ("a" is also a stop word, which the URL slot
# ignores.)
D1 = AdCopy("d1", ("b",), (), "a")
D2 = AdCopy("d2", ("b",), (), "c")
COPIES = {"d1": D1, "d2": D2}


def fixture_sessions(query="q"):
    # d1 shown twice and clicked twice, d2 shown twice and clicked once.
    return [Session("s1", query, ("d1", "d2"), (1, 2)), Session("s2", query, ("d1", "d2"), (1,))]


def fixture_stats(freq=None, sessions=None, copies=COPIES):
    sessions = sessions or fixture_sessions()
    return build_word_stats(sessions, copies, freq or QueryFrequencyTable({"q": 50}))


class TestWordStats:
    def test_hand_counts(self):
        stats = fixture_stats()
        assert stats.get("q", "a") == (2, 2)
        assert stats.get("q", "b") == (4, 3)
        assert stats.get("q", "c") == (2, 1)
        assert GLOBAL_SCOPE not in stats.counts

    def test_infrequent_query_pools_globally(self):
        stats = fixture_stats(QueryFrequencyTable({"q": 49}))
        assert stats.get(GLOBAL_SCOPE, "b") == (4, 3)
        assert "q" not in stats.counts

    def test_never_clicked_words(self):
        s = [Session("s", "q", ("d1", "d2"), ())]
        stats = fixture_stats(sessions=s)
        assert stats.get("q", "a") == (1, 0) and stats.get("q", "c") == (1, 0)

    def test_stop_words_absent(self):
        copies = {"d1": AdCopy.from_text("d1", "The best plumber", "the fastest", "www.x.com")}
        stats = build_word_stats([Session("s", "q", ("d1",), (1,))], copies, QueryFrequencyTable({"q": 1}))
        words = set(stats.counts[GLOBAL_SCOPE])
        assert "the" not in words and words == {"best", "plumber", "fastest", "www.x.com"}

    def test_missing_copy_is_flagged(self):
        stats = build_word_stats([Session("s", "q", ("d1", "zz"), (2,))], COPIES, QueryFrequencyTable())
        assert stats.missing_ads == {"zz"}
        assert stats.get(GLOBAL_SCOPE, "b") == (1, 0)

    def test_counts_bounded(self):
        stats = fixture_stats()
        for table in stats.counts.values():
            for n, c in table.values():
                assert 0 <= c <= n

    def test_merge_equals_union(self):
        freq = QueryFrequencyTable({"q": 50})
        a = build_word_stats(fixture_sessions()[:1], COPIES, freq)
        b = build_word_stats(fixture_sessions()[1:], COPIES, freq)
        assert a.merge(b).counts == fixture_stats().counts

    def test_dump_load_round_trip(self):
        stats = fixture_stats()
        buf = io.StringIO()
        stats.dump(buf)
        back = WordStats.load(io.StringIO(buf.getvalue()))
        assert back.counts == stats.counts and back.frequent == frozenset({"q"})
        assert buf.getvalue().splitlines()[0] == "a\tq\t2\t2"


class TestEstimateTheta:
    def test_hand_substitution(self):
        stats = fixture_stats()
        assert estimate_theta(D1, "q", stats) == 0.875
        assert estimate_theta(D2, "q", stats) == 0.625

    def test_always_clicked_gives_one(self):
        stats = fixture_stats()
        assert estimate_theta(AdCopy("x", ("a",), ("the",), "a"), "q", stats) == 1.0

    def test_cold_start_falls_back_to_pooled_mean(self):
        stats = fixture_stats()
        assert estimate_theta(AdCopy("new", ("zzz",), (), "www.new.com"), "q", stats) == stats.mean_ratio
        assert stats.mean_ratio == 6 / 8

    def test_unscored_words_are_skipped(self):
        stats = fixture_stats()
        assert estimate_theta(AdCopy("x", ("zzz",), ("c",), "a"), "q", stats) == 0.75

    def test_order_and_duplicate_stop_words(self):
        stats = fixture_stats()
        a = AdCopy.from_text("x", "b the the", "", "a")
        b = AdCopy.from_text("x", "the b", "the", "a")
        assert estimate_theta(a, "q", stats) == estimate_theta(b, "q", stats) == 0.875

    def test_per_query_scoping_under_injection(self):
        freq = QueryFrequencyTable({"q": 50, "other": 80, "rare": 3})
        base = build_word_stats(fixture_sessions(), COPIES, freq)
        noise = [Session(f"n{i}", qq, ("d1", "d2"), ()) for i, qq in enumerate(["other", "rare"] * 30)]
        injected = build_word_stats(fixture_sessions() + noise, COPIES, freq)
        for copy in (D1, D2):
            assert estimate_theta(copy, "q", injected) == estimate_theta(copy, "q", base)
        assert estimate_theta(D1, "other", injected) == 0.0

    @given(st.lists(st.tuples(st.sampled_from(["d1", "d2"]), st.booleans()), min_size=1, max_size=30))
    def test_theta_in_unit_interval(self, impressions):
        sessions = [Session(f"s{i}", "q", (ad,), (1,) if clicked else ()) for i, (ad, clicked) in enumerate(impressions)]
        stats = build_word_stats(sessions, COPIES, QueryFrequencyTable())
        for copy in (D1, D2):
            assert 0.0 <= estimate_theta(copy, "q", stats) <= 1.0


class TestCopiesAndTable:
    def test_tokenize(self):
        assert tokenize("Fix-It FAST, 24/7!") == ["fix", "it", "fast", "24", "7"]

    def test_display_url_is_one_token(self):
        copy = AdCopy.from_text("x", "Title", "Desc", "WWW.Example.com/Plumbers")
        assert copy.display_url_token == "www.example.com/plumbers"

    def test_copy_file_round_trip(self, tmp_path):
        path = tmp_path / "ads.tsv"
        with open(path, "w") as fh:
            for c in COPIES.values():
                write_ad_copy(fh, c)
        assert read_ad_copies(path) == COPIES

    def test_table(self):
        stats = fixture_stats()
        table = build_attractiveness_table([("q", "d1"), ("q", "d2"), ("q", "ghost")], COPIES, stats)
        assert table.get("q", "d1") == 0.875 and table.get("q", "d2") == 0.625
        assert table.get("q", "ghost") == table.default == 0.75

    def test_stop_list_size(self):
        assert 90 <= len(STOP_WORDS) <= 130
