"""Selective sub-sampling of a MIND corpus and corpus statistics."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .data import Corpus, Impression, NewsArticle
from .errors import ConfigError


@dataclass
class TinySample:
    users: list[int]
    news: list[int]            # most clicked first
    behaviors: list[Impression]
    user_interactions: dict[int, int]
    news_clicks: dict[int, int]
    rounds: int


def interaction_pairs(behaviors: list[Impression], history: bool = True) -> set[tuple[int, int]]:
    """Distinct (user, news) pairs from clicked candidates and, optionally, history."""
    pairs = set()
    for imp in behaviors:
        if history:
            pairs.update((imp.user_id, n) for n in imp.history)
        pairs.update((imp.user_id, n) for n, label in imp.candidates if label == 1)
    return pairs


def _restrict(imp: Impression, keep_news: set[int]) -> Impression | None:
    candidates = [(n, label) for n, label in imp.candidates if n in keep_news]
    if not any(label == 1 for _, label in candidates):
        return None
    history = [n for n in imp.history if n in keep_news]
    return Impression(imp.impression_id, imp.user_id, history, candidates, imp.user, imp.time)


def sample_mindtiny(behaviors: list[Impression], news: list[NewsArticle],
                    min_user_clicks: int = 24, min_news_clicks: int = 150,
                    count_history: bool = True) -> TinySample:
    """Keep active users and popular news.

    A user's interactions and a news item's clicks are both counted as
    distinct (user, news) pairs. Filtering users, restricting impressions to
    kept news and dropping impressions without a click are repeated until
    nothing changes, so both minimums hold on the returned behaviors.
    """
    if min_user_clicks < 1 or min_news_clicks < 1:
        raise ConfigError("MINDtiny thresholds must be >= 1")
    current = list(behaviors)
    rounds = 0
    while True:
        rounds += 1
        pairs = interaction_pairs(current, count_history)
        per_user = Counter(u for u, _ in pairs)
        per_news = Counter(n for _, n in pairs)
        keep_users = {u for u, c in per_user.items() if c >= min_user_clicks}
        keep_news = {n for n, c in per_news.items() if c >= min_news_clicks}
        nxt = []
        for imp in current:
            if imp.user_id not in keep_users:
                continue
            restricted = _restrict(imp, keep_news)
            if restricted is not None:
                nxt.append(restricted)
        stable = (len(nxt) == len(current)
                  and all(a.history == b.history and a.candidates == b.candidates
                          for a, b in zip(nxt, current)))
        current = nxt
        if stable:
            break
    pairs = interaction_pairs(current, count_history)
    per_user = Counter(u for u, _ in pairs)
    per_news = Counter(n for _, n in pairs)
    news_out = sorted(per_news, key=lambda n: (-per_news[n], n))
    users_out = sorted(per_user)
    return TinySample(users_out, news_out, current, dict(per_user), dict(per_news), rounds)


# ------------------------------------------------------------------ stats

SUMMARY_COLUMNS = ["statistic", "value"]


def dataset_stats(corpus: Corpus, articles: list[NewsArticle] | None = None,
                  behaviors: list[Impression] | None = None) -> dict:
    articles = corpus.news if articles is None else articles
    n = len(articles)
    users = {imp.user_id for imp in behaviors or []}
    return {
        "news": n,
        "users": len(users),
        "categories": len({a.category_id for a in articles}),
        "subcategories": len({a.subcategory_id for a in articles}),
        "avg_title_length": sum(a.title_len for a in articles) / n if n else 0.0,
        "avg_abstract_length": sum(a.abstract_len for a in articles) / n if n else 0.0,
        "category_histogram": Counter(corpus.categories.itos[a.category_id] for a in articles),
        "title_length_histogram": Counter(a.title_len for a in articles),
        "abstract_length_histogram": Counter(a.abstract_len for a in articles),
    }


def write_stats(stats: dict, out_dir) -> list[Path]:
    """Write ``stats_summary.csv``, ``category_histogram.csv`` and
    ``length_histogram.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "stats_summary.csv", out_dir / "category_histogram.csv",
             out_dir / "length_histogram.csv"]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for key in ("news", "users", "categories", "subcategories"):
            w.writerow([key, stats[key]])
        for key in ("avg_title_length", "avg_abstract_length"):
            w.writerow([key, f"{stats[key]:.4f}"])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "news_count"])
        for cat, count in sorted(stats["category_histogram"].items(), key=lambda kv: (-kv[1], kv[0])):
            w.writerow([cat, count])
    titles, abstracts = stats["title_length_histogram"], stats["abstract_length_histogram"]
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["length", "title_count", "abstract_count"])
        for length in sorted(set(titles) | set(abstracts)):
            w.writerow([length, titles.get(length, 0), abstracts.get(length, 0)])
    return paths
