"""Assemble corpora and models from a RunConfig or a checkpoint."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import Checkpoint
from .config import RunConfig
from .data import Corpus, Impression, ParseReport, load_embedding_file
from .errors import DataError
from .model import NewsRecommender
from .news_encoder import NewsFeatures
from .rng import RngState

log = logging.getLogger(__name__)


@dataclass
class Datasets:
    corpus: Corpus
    train: list[Impression]
    val: list[Impression]
    test: list[Impression]
    reports: dict[str, ParseReport] = field(default_factory=dict)


def split_paths(value: str) -> list[Path]:
    return [Path(p.strip()) for p in value.split(",") if p.strip()]


def _need(value: str, key: str) -> str:
    if not value:
        raise DataError(f"no {key} file configured")
    return value


def parse_news_files(corpus: Corpus, value: str, reports: dict) -> None:
    for path in split_paths(_need(value, "news")):
        _, report = corpus.parse_news_tsv(path)
        reports[str(path)] = report
        _log_report(report)


def _log_report(report: ParseReport) -> None:
    if report.skipped:
        first = report.errors[0]
        log.warning("%s: skipped %d malformed rows (first at line %d: %s)",
                    report.path, report.skipped, first[0], first[1])


def parse_behaviors(corpus: Corpus, path: str, history_max: int, reports: dict,
                    allow_empty: bool = False) -> list[Impression]:
    imps, report = corpus.parse_behaviors_tsv(path, history_max)
    reports[str(path)] = report
    _log_report(report)
    if not imps and not allow_empty:
        raise DataError(f"{path}: no usable impressions")
    return imps


def load_datasets(cfg: RunConfig) -> Datasets:
    """Parse news, then training behaviors (which fix the user map), then the rest."""
    reports: dict[str, ParseReport] = {}
    corpus = Corpus(cfg.title_max, cfg.abstract_max)
    parse_news_files(corpus, cfg.news, reports)
    train = parse_behaviors(corpus, _need(cfg.train_behaviors, "train_behaviors"),
                            cfg.history_max, reports)
    corpus.freeze()
    val = parse_behaviors(corpus, cfg.val_behaviors, cfg.history_max, reports) \
        if cfg.val_behaviors else []
    test = parse_behaviors(corpus, cfg.test_behaviors, cfg.history_max, reports) \
        if cfg.test_behaviors else []
    return Datasets(corpus, train, val, test, reports)


def build_model(cfg: RunConfig, corpus: Corpus) -> NewsRecommender:
    rng = RngState(cfg.seed, "model")
    table = None
    if cfg.embedding_mode != "random":
        table, coverage = load_embedding_file(cfg.embeddings, corpus.vocab, cfg.d_w,
                                              rng.child("embeddings"))
        log.info("word vectors: %d hits, %d misses", coverage.hits, coverage.misses)
    return NewsRecommender.create(cfg.model_config(), NewsFeatures.from_articles(corpus.news),
                                  len(corpus.vocab), len(corpus.categories),
                                  len(corpus.subcategories), len(corpus.users), rng, table)


def model_from_checkpoint(ckpt: Checkpoint, corpus: Corpus) -> NewsRecommender:
    """Rebuild the trained model over ``corpus.news`` (parsed with the checkpoint's maps)."""
    cfg = RunConfig(**ckpt.config)
    return NewsRecommender(cfg.model_config(), ckpt.store(), NewsFeatures.from_articles(corpus.news),
                           len(corpus.categories), len(corpus.subcategories), len(corpus.users))
