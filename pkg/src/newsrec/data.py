"""MIND-format ingestion: vocabularies, news and behaviors parsing, word
vectors, training-sample construction and mini-batching."""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DataError
from .rng import RngState

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
UNKNOWN_USER = -1
_TOKEN = re.compile(r"[^\W_]+")


class IdMap:
    """Growable string -> index map with reserved leading entries.

    While unfrozen, unseen keys get the next index in first-seen order.
    Once frozen, unseen keys map to ``fallback``.
    """

    def __init__(self, reserved: tuple[str, ...] = (), fallback: int | None = None):
        self.itos: list[str] = list(reserved)
        self.stoi: dict[str, int] = {s: i for i, s in enumerate(reserved)}
        self.fallback = fallback
        self.frozen = False

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, key: str) -> bool:
        return key in self.stoi

    def get(self, key: str, grow: bool = True) -> int | None:
        idx = self.stoi.get(key)
        if idx is None:
            if grow and not self.frozen:
                idx = self.stoi[key] = len(self.itos)
                self.itos.append(key)
            else:
                idx = self.fallback
        return idx

    def freeze(self) -> "IdMap":
        self.frozen = True
        return self

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, items: list[str], reserved_count: int, fallback: int | None) -> "IdMap":
        m = cls(tuple(items[:reserved_count]), fallback)
        for s in items[reserved_count:]:
            m.get(s)
        return m


class Vocabulary(IdMap):
    """Word vocabulary; id 0 is PAD and id 1 is UNK."""

    def __init__(self):
        super().__init__(("<pad>", "<unk>"), fallback=UNK)

    @classmethod
    def from_words(cls, items: list[str]) -> "Vocabulary":
        v = cls()
        for s in items[2:]:
            v.get(s)
        return v


def category_map() -> IdMap:
    """Category map with index 0 reserved for unseen labels."""
    return IdMap(("<unk>",), fallback=0)


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text).lower()


def split_words(text: str) -> list[str]:
    return _TOKEN.findall(normalize(text))


def tokenize(text: str, vocab: Vocabulary, max_len: int, grow: bool = False) -> tuple[list[int], int]:
    """Lowercase, split on non-alphanumeric runs, truncate and pad with PAD.

    With ``grow`` unseen words are added to ``vocab``; otherwise they map to UNK.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.get(w, grow) for w in split_words(text)[:max_len]]
    n = len(ids)
    return ids + [PAD] * (max_len - n), n


@dataclass
class NewsArticle:
    news_id: str
    category_id: int
    subcategory_id: int
    title_ids: list[int]
    abstract_ids: list[int]
    title_len: int
    abstract_len: int
    category: str = ""
    subcategory: str = ""
    title: str = ""
    abstract: str = ""


@dataclass
class Impression:
    impression_id: str
    user_id: int
    history: list[int]
    candidates: list[tuple[int, int]]
    user: str = ""
    time: str = ""

    @property
    def positives(self) -> list[int]:
        return [n for n, label in self.candidates if label == 1]

    @property
    def negatives(self) -> list[int]:
        return [n for n, label in self.candidates if label == 0]


@dataclass
class TrainSample:
    user_id: int
    history: list[int]
    positive: int
    negatives: list[int]


@dataclass
class ParseReport:
    path: str
    rows: int = 0
    skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    duplicates: int = 0
    unknown_history: int = 0
    unknown_candidates: int = 0
    truncated_histories: int = 0

    def error(self, line: int, message: str) -> None:
        self.skipped += 1
        self.errors.append((line, message))
        log.warning("%s:%d: %s", self.path, line, message)


def _read_lines(path) -> Iterator[tuple[int, str]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


class Corpus:
    """Id maps plus every parsed article, shared by all splits of one run."""

    def __init__(self, title_max: int = 32, abstract_max: int = 64):
        self.title_max = title_max
        self.abstract_max = abstract_max
        self.vocab = Vocabulary()
        self.categories = category_map()
        self.subcategories = category_map()
        self.users = IdMap()
        self.news: list[NewsArticle] = []
        self.news_index: dict[str, int] = {}

    def freeze(self) -> None:
        """Stop growing vocab, category and user maps (news stays open)."""
        for m in (self.vocab, self.categories, self.subcategories, self.users):
            m.freeze()

    def parse_news_tsv(self, path) -> tuple[list[NewsArticle], ParseReport]:
        report = ParseReport(str(path))
        parsed = []
        for lineno, line in _read_lines(path):
            report.rows += 1
            fields = line.split("\t")
            if len(fields) < 5:
                report.error(lineno, f"expected >= 5 tab-separated fields, got {len(fields)}")
                continue
            news_id, category, subcategory, title, abstract = fields[:5]
            if not news_id:
                report.error(lineno, "empty news id")
                continue
            if news_id in self.news_index:
                report.duplicates += 1
                continue
            article = self.make_article(news_id, category, subcategory, title, abstract)
            self.news_index[news_id] = len(self.news)
            self.news.append(article)
            parsed.append(article)
        return parsed, report

    def make_article(self, news_id, category, subcategory, title, abstract) -> NewsArticle:
        grow = not self.vocab.frozen
        title_ids, title_len = tokenize(title, self.vocab, self.title_max, grow)
        abstract_ids, abstract_len = tokenize(abstract, self.vocab, self.abstract_max, grow)
        return NewsArticle(
            news_id=news_id,
            category_id=self.categories.get(normalize(category)),
            subcategory_id=self.subcategories.get(normalize(subcategory)),
            title_ids=title_ids, abstract_ids=abstract_ids,
            title_len=title_len, abstract_len=abstract_len,
            category=category, subcategory=subcategory, title=title, abstract=abstract)

    def parse_behaviors_tsv(self, path, history_max: int = 60) -> tuple[list[Impression], ParseReport]:
        report = ParseReport(str(path))
        out = []
        for lineno, line in _read_lines(path):
            report.rows += 1
            fields = line.split("\t")
            if len(fields) < 5:
                report.error(lineno, f"expected 5 tab-separated fields, got {len(fields)}")
                continue
            imp_id, user, time, history_field, cand_field = fields[:5]
            candidates = []
            bad = None
            for token in cand_field.split():
                news_id, sep, label = token.rpartition("-")
                if not sep or label not in ("0", "1"):
                    bad = token
                    break
                idx = self.news_index.get(news_id)
                if idx is None:
                    report.unknown_candidates += 1
                    continue
                candidates.append((idx, int(label)))
            if bad is not None:
                report.error(lineno, f"candidate {bad!r} lacks a -0/-1 label suffix")
                continue
            history = []
            for news_id in history_field.split():
                idx = self.news_index.get(news_id)
                if idx is None:
                    report.unknown_history += 1
                else:
                    history.append(idx)
            if len(history) > history_max:
                report.truncated_histories += 1
                history = history[len(history) - history_max:]
            uid = self.users.get(user)
            out.append(Impression(imp_id, UNKNOWN_USER if uid is None else uid,
                                  history, candidates, user=user, time=time))
        return out, report


def news_to_tsv_row(article: NewsArticle, corpus: Corpus) -> str:
    """Canonical TSV row rebuilt from token ids (used for round-trip checks)."""
    words = corpus.vocab.itos
    title = " ".join(words[i] for i in article.title_ids[:article.title_len])
    abstract = " ".join(words[i] for i in article.abstract_ids[:article.abstract_len])
    return "\t".join([article.news_id, corpus.categories.itos[article.category_id],
                      corpus.subcategories.itos[article.subcategory_id], title, abstract])


def raw_news_row(article: NewsArticle) -> str:
    return "\t".join([article.news_id, article.category, article.subcategory,
                      article.title, article.abstract])


def raw_behaviors_row(imp: Impression, corpus: Corpus, ids: list[str] | None = None) -> str:
    """Source-format row; pass ``ids`` (news ids by index) when writing many rows."""
    ids = ids if ids is not None else [a.news_id for a in corpus.news]
    history = " ".join(ids[i] for i in imp.history)
    cands = " ".join(f"{ids[i]}-{label}" for i, label in imp.candidates)
    return "\t".join([imp.impression_id, imp.user, imp.time, history, cands])


# ------------------------------------------------------------ word vectors


@dataclass
class EmbeddingCoverage:
    dim: int
    hits: int
    misses: int

    @property
    def ratio(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


def load_embedding_file(path, vocab: Vocabulary, dim: int,
                        rng: RngState) -> tuple[np.ndarray, EmbeddingCoverage]:
    """Build a [V x dim] table from a whitespace-separated text vector file.

    Rows for words missing from the file come from a seeded N(0, 0.1) draw
    made before reading, so they do not depend on file contents. PAD is zero.
    """
    table = rng.normal(0.0, 0.1, (len(vocab), dim)).astype(np.float32)
    found = np.zeros(len(vocab), dtype=bool)
    for lineno, line in _read_lines(path):
        parts = line.rstrip().split(" ")
        if len(parts) != dim + 1:
            raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
        idx = vocab.stoi.get(normalize(parts[0]))
        if idx is None or idx < 2 or found[idx]:
            continue
        try:
            table[idx] = np.array(parts[1:], dtype=np.float32)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        found[idx] = True
    table[PAD] = 0.0
    hits = int(found[2:].sum())
    return table, EmbeddingCoverage(dim, hits, len(vocab) - 2 - hits)


def random_embedding_table(vocab_size: int, dim: int, rng: RngState) -> np.ndarray:
    table = rng.normal(0.0, 0.1, (vocab_size, dim)).astype(np.float32)
    table[PAD] = 0.0
    return table


# ------------------------------------------------------------ training samples


@dataclass
class SampleStats:
    impressions: int = 0
    samples: int = 0
    no_negative: int = 0
    no_positive: int = 0
    with_replacement: int = 0


def sample_negatives(imp: Impression, k: int, rng: RngState,
                     stats: SampleStats | None = None) -> list[TrainSample]:
    """One sample per clicked candidate, each with ``k`` unclicked candidates.

    Negatives come from the same impression, without replacement when there
    are at least ``k`` of them and with replacement otherwise.
    """
    stats = stats if stats is not None else SampleStats()
    stats.impressions += 1
    positives, negatives = imp.positives, imp.negatives
    if not positives:
        stats.no_positive += 1
        return []
    if not negatives:
        stats.no_negative += 1
        return []
    out = []
    for pos in positives:
        if len(negatives) >= k:
            picks = rng.choice(len(negatives), k, replace=False)
        else:
            picks = rng.choice(len(negatives), k, replace=True)
            stats.with_replacement += 1
        out.append(TrainSample(imp.user_id, list(imp.history), pos,
                               [negatives[int(i)] for i in picks]))
    stats.samples += len(out)
    return out


def build_train_samples(impressions: list[Impression], k: int,
                        rng: RngState) -> tuple[list[TrainSample], SampleStats]:
    stats = SampleStats()
    samples = []
    for imp in impressions:
        samples.extend(sample_negatives(imp, k, rng, stats))
    if stats.no_negative:
        log.info("skipped %d impressions without negatives", stats.no_negative)
    return samples, stats


@dataclass
class Batch:
    user_ids: np.ndarray       # [B]
    history: np.ndarray        # [B, H] news indices, 0 where masked
    history_mask: np.ndarray   # [B, H] bool, real clicks form a prefix
    candidates: np.ndarray     # [B, 1 + K], positive in column 0

    def __len__(self) -> int:
        return len(self.user_ids)


def collate(samples: list[TrainSample]) -> Batch:
    width = max(1, max(len(s.history) for s in samples))
    history = np.zeros((len(samples), width), dtype=np.int64)
    mask = np.zeros((len(samples), width), dtype=bool)
    for row, s in enumerate(samples):
        history[row, :len(s.history)] = s.history
        mask[row, :len(s.history)] = True
    return Batch(
        user_ids=np.array([s.user_id for s in samples], dtype=np.int64),
        history=history, history_mask=mask,
        candidates=np.array([[s.positive] + s.negatives for s in samples], dtype=np.int64))


def build_batches(samples: list[TrainSample], batch_size: int, rng: RngState) -> Iterator[Batch]:
    """Shuffle with ``rng`` and yield padded batches; the last may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        yield collate([samples[i] for i in order[start:start + batch_size]])
