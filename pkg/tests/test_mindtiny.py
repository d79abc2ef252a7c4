import sys
from collections import Counter

import pytest

from newsrec.data import Corpus, Impression
from newsrec.errors import ConfigError
from newsrec.mindtiny import dataset_stats, interaction_pairs, sample_mindtiny, write_stats
from newsrec.synthetic import ActivitySpec, generate_activity


def _imp(user, history, clicks=(), skips=()):
    return Impression(f"I{user}", user, list(history), [(n, 1) for n in clicks] + [(n, 0) for n in skips])


def test_user_threshold_boundary():
    # user 0 has exactly 24 distinct interactions, user 1 has 23
    imps = [_imp(0, range(23), clicks=[23]), _imp(1, range(22), clicks=[22])]
    tiny = sample_mindtiny(imps, [], min_user_clicks=24, min_news_clicks=1)
    assert tiny.users == [0]


def test_duplicate_interactions_counted_once():
    imps = [_imp(0, [1, 2], clicks=[1]), _imp(0, [1, 2], clicks=[2])]
    assert interaction_pairs(imps) == {(0, 1), (0, 2)}


def test_history_excluded_when_configured():
    imps = [_imp(0, [5, 6, 7], clicks=[1])]
    assert interaction_pairs(imps, history=False) == {(0, 1)}


def test_news_threshold_and_order():
    imps = [_imp(u, [], clicks=[1] + ([2] if u < 3 else []), skips=[9]) for u in range(5)]
    tiny = sample_mindtiny(imps, [], min_user_clicks=1, min_news_clicks=3)
    assert tiny.news == [1, 2]
    assert all(n in (1, 2) for imp in tiny.behaviors for n, _ in imp.candidates)


def test_impressions_without_kept_click_dropped():
    imps = [_imp(u, [], clicks=[1], skips=[2]) for u in range(3)] + [_imp(9, [1, 1], clicks=[7])]
    tiny = sample_mindtiny(imps, [], min_user_clicks=1, min_news_clicks=3)
    # news 7 is filtered out, leaving user 9's impression without a click
    assert sorted(i.user_id for i in tiny.behaviors) == [0, 1, 2]
    assert tiny.news == [1]


def test_thresholds_validated():
    with pytest.raises(ConfigError):
        sample_mindtiny([], [], min_user_clicks=0)


@pytest.fixture(scope="module")
def activity(tmp_path_factory):
    d = tmp_path_factory.mktemp("act")
    news_path, beh_path = generate_activity(ActivitySpec()).write(d)
    corpus = Corpus()
    corpus.parse_news_tsv(news_path)
    imps, _ = corpus.parse_behaviors_tsv(beh_path, sys.maxsize)
    return corpus, imps


def test_post_filter_minimums(activity):
    corpus, imps = activity
    tiny = sample_mindtiny(imps, corpus.news)
    assert tiny.users and tiny.news
    # recount independently on the returned behaviors
    pairs = {(i.user_id, n) for i in tiny.behaviors for n in i.history} | \
            {(i.user_id, n) for i in tiny.behaviors for n, y in i.candidates if y == 1}
    per_user = Counter(u for u, _ in pairs)
    per_news = Counter(n for _, n in pairs)
    assert min(per_user.values()) >= 24 and min(per_news.values()) >= 150
    assert set(per_news) == set(tiny.news)
    counts = [per_news[n] for n in tiny.news]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert all(any(y == 1 for _, y in i.candidates) for i in tiny.behaviors)


def test_sampling_deterministic(activity):
    corpus, imps = activity
    a, b = sample_mindtiny(imps, corpus.news), sample_mindtiny(imps, corpus.news)
    assert a.news == b.news and a.users == b.users and a.rounds == b.rounds


def test_stats_averages(tmp_path):
    corpus = Corpus()
    path = tmp_path / "news.tsv"
    path.write_text("N1\tsports\tnfl\tone two three\t\nN2\tsports\tnba\ta b c\tx y\n"
                    "N3\tnews\tus\tq w e\tz\n")
    corpus.parse_news_tsv(path)
    stats = dataset_stats(corpus)
    assert stats["avg_title_length"] == 3.0 and stats["avg_abstract_length"] == 1.0
    assert stats["category_histogram"] == {"sports": 2, "news": 1}
    paths = write_stats(stats, tmp_path / "out")
    assert paths[0].read_text().splitlines()[5] == "avg_title_length,3.0000"
    assert paths[1].read_text().splitlines()[1:] == ["sports,2", "news,1"]
