"""Synthetic MIND-format corpora with a planted preference structure.

Each article belongs to one latent topic. Its words are drawn from that
topic's word pool with probability ``text_signal`` and uniformly from the
whole vocabulary otherwise; its category names the topic with probability
``category_signal``. Every user likes a few topics, clicks only articles from
them, and is shown unclicked articles from the other topics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .rng import RngState


@dataclass
class SyntheticSpec:
    vocab_size: int = 500
    n_news: int = 300
    n_users: int = 40
    n_impressions: int = 200
    n_topics: int = 10
    topics_per_user: int = 2
    text_signal: float = 0.8
    category_signal: float = 1.0
    history_range: tuple[int, int] = (3, 12)
    positives_range: tuple[int, int] = (1, 2)
    negatives_range: tuple[int, int] = (3, 8)
    title_range: tuple[int, int] = (4, 12)
    abstract_range: tuple[int, int] = (0, 20)
    seed: int = 0


@dataclass
class SyntheticCorpus:
    news_rows: list[str]
    behaviors_rows: list[str]
    topics: list[int]                 # topic per article, by row
    user_topics: dict[str, list[int]]

    def write(self, directory, behaviors_rows: list[str] | None = None,
              name: str = "behaviors.tsv") -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        news_path, beh_path = directory / "news.tsv", directory / name
        news_path.write_text("".join(r + "\n" for r in self.news_rows), encoding="utf-8")
        rows = self.behaviors_rows if behaviors_rows is None else behaviors_rows
        beh_path.write_text("".join(r + "\n" for r in rows), encoding="utf-8")
        return news_path, beh_path


def _pick(rng: RngState, pool: list, n: int) -> list:
    return [pool[int(i)] for i in rng.choice(len(pool), min(n, len(pool)), replace=False)]


def _between(rng: RngState, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def generate(spec: SyntheticSpec) -> SyntheticCorpus:
    rng = RngState(spec.seed, "synthetic")
    words = [f"w{i}" for i in range(spec.vocab_size)]
    pool_size = spec.vocab_size // (spec.n_topics + 1)
    pools = [words[t * pool_size:(t + 1) * pool_size] for t in range(spec.n_topics)]

    def text(topic: int, bounds: tuple[int, int]) -> str:
        out = []
        for _ in range(_between(rng, bounds)):
            if rng.random(None) < spec.text_signal:
                out.append(pools[topic][int(rng.integers(0, len(pools[topic])))])
            else:
                out.append(words[int(rng.integers(0, len(words)))])
        return " ".join(out)

    topics, news_rows, by_topic = [], [], [[] for _ in range(spec.n_topics)]
    for j in range(spec.n_news):
        topic = j % spec.n_topics
        shown = topic if rng.random(None) < spec.category_signal else int(rng.integers(0, spec.n_topics))
        news_id = f"N{j + 1}"
        news_rows.append("\t".join([news_id, f"topic{shown}", f"topic{shown}_{j % 2}",
                                    text(topic, spec.title_range), text(topic, spec.abstract_range)]))
        topics.append(topic)
        by_topic[topic].append(news_id)

    user_topics = {}
    for u in range(spec.n_users):
        user_topics[f"U{u + 1}"] = sorted(int(t) for t in
                                          rng.choice(spec.n_topics, spec.topics_per_user, replace=False))
    users = sorted(user_topics, key=lambda s: int(s[1:]))

    behaviors = []
    for i in range(spec.n_impressions):
        user = users[i % len(users)]
        liked = [n for t in user_topics[user] for n in by_topic[t]]
        other = [n for t in range(spec.n_topics) if t not in user_topics[user] for n in by_topic[t]]
        history = _pick(rng, liked, _between(rng, spec.history_range))
        fresh = [n for n in liked if n not in history]
        pos = _pick(rng, fresh, _between(rng, spec.positives_range))
        neg = _pick(rng, other, _between(rng, spec.negatives_range))
        cands = [f"{n}-1" for n in pos] + [f"{n}-0" for n in neg]
        order = rng.permutation(len(cands))
        behaviors.append("\t".join([f"I{i + 1}", user, f"t{i}", " ".join(history),
                                    " ".join(cands[int(k)] for k in order)]))
    return SyntheticCorpus(news_rows, behaviors, topics, user_topics)


@dataclass
class ActivitySpec:
    """Heavy-tailed activity for exercising the MINDtiny filter."""
    n_users: int = 500
    n_news: int = 200
    n_impressions: int = 1500
    history_range: tuple[int, int] = (0, 80)
    candidates_range: tuple[int, int] = (2, 10)
    click_rate: float = 0.3
    popularity_exponent: float = 1.0
    heavy_share: float = 0.5
    seed: int = 0


def generate_activity(spec: ActivitySpec) -> SyntheticCorpus:
    """News popularity follows a power law; a ``heavy_share`` of users browse a
    lot, the rest barely at all."""
    rng = RngState(spec.seed, "activity")
    news_ids = [f"N{j + 1}" for j in range(spec.n_news)]
    topics = [j % 7 for j in range(spec.n_news)]
    news_rows = ["\t".join([n, f"cat{t}", f"sub{t}_{j % 3}", f"headline {j} about topic {t}",
                            f"body words for {n}"]) for j, (n, t) in enumerate(zip(news_ids, topics))]
    weights = [1.0 / (j + 1) ** spec.popularity_exponent for j in range(spec.n_news)]
    total = sum(weights)
    probs = [w / total for w in weights]
    activity = [0.6 + 0.4 * rng.random(None) if rng.random(None) < spec.heavy_share
                else 0.2 * rng.random(None) for _ in range(spec.n_users)]

    def draw(n: int) -> list[str]:
        n = min(n, spec.n_news)
        idx = rng.generator.choice(spec.n_news, size=n, replace=False, p=probs)
        return [news_ids[int(i)] for i in idx]

    behaviors = []
    for i in range(spec.n_impressions):
        u = int(rng.integers(0, spec.n_users))
        lo, hi = spec.history_range
        history = draw(int(lo + round(activity[u] * (hi - lo))))
        cands = draw(_between(rng, spec.candidates_range))
        labels = [1 if rng.random(None) < spec.click_rate else 0 for _ in cands]
        behaviors.append("\t".join([f"I{i + 1}", f"U{u + 1}", f"t{i}", " ".join(history),
                                    " ".join(f"{n}-{y}" for n, y in zip(cands, labels))]))
    return SyntheticCorpus(news_rows, behaviors, topics, {})
