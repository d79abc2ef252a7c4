"""The full recommender: news encoder, user encoder and click predictor."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .data import Batch, PAD
from .errors import ConfigError
from .init import Initializer
from .news_encoder import (CategoryViewParams, NewsEncoderParams, NewsFeatures, NewsVector,
                           TextViewParams, ViewAttentionParams, encode_news)
from .predictor import KINDS, MLPParams, dnn_score, dot_score
from .rng import RngState
from .tensor import ParamStore, Tensor
from .user_encoder import (CandidateAttentionParams, UserEncoderParams, UserVector, bind_lstm,
                           create_lstm, encode_user)

EMBEDDING_MODES = ("frozen", "trainable", "random")


@dataclass
class ModelConfig:
    d_w: int = 300
    n_f: int = 400
    window: int = 3
    d_a: int = 200
    d_c: int = 100
    d_att: int = 200
    predictor: str = "neural"
    predictor_hidden: list[int] = field(default_factory=lambda: [256, 64])
    dropout: float = 0.3
    category_views: bool = True
    word_attention: bool = True
    embedding_mode: str = "frozen"

    def validate(self) -> None:
        for name in ("d_w", "n_f", "d_a", "d_c", "d_att"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be a positive odd number, got {self.window}")
        if self.predictor not in KINDS:
            raise ConfigError(f"predictor must be one of {KINDS}, got {self.predictor!r}")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ConfigError(f"embedding_mode must be one of {EMBEDDING_MODES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if any(w < 1 for w in self.predictor_hidden):
            raise ConfigError("predictor hidden widths must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Scores:
    scores: Tensor            # [B, C]
    news: NewsVector
    user: UserVector


class NewsRecommender:
    """Owns the parameter store and runs batched forward passes.

    ``news`` holds feature columns for every article the model may see; all
    news ids handed to the model are row indices into it.
    """

    def __init__(self, config: ModelConfig, store: ParamStore, news: NewsFeatures,
                 n_categories: int, n_subcategories: int, n_users: int):
        config.validate()
        self.config = config
        self.store = store
        self.news = news
        self.n_categories = n_categories
        self.n_subcategories = n_subcategories
        self.n_users = n_users
        self._bind()

    @classmethod
    def create(cls, config: ModelConfig, news: NewsFeatures, vocab_size: int, n_categories: int,
               n_subcategories: int, n_users: int, rng: RngState,
               word_table: np.ndarray | None = None) -> "NewsRecommender":
        """Fresh parameters drawn from ``rng``.

        ``word_table`` is a pre-built [V x d_w] table (e.g. loaded vectors);
        without it the table is a seeded N(0, 0.1) draw. It is trainable
        unless ``embedding_mode`` is ``frozen``.
        """
        config.validate()
        store = ParamStore()
        init = Initializer(store, rng.child("init"))
        c = config
        if word_table is None:
            word_table = init.rng.normal(0.0, 0.1, (vocab_size, c.d_w))
            word_table[PAD] = 0.0
        if word_table.shape != (vocab_size, c.d_w):
            raise ConfigError(f"word table shape {word_table.shape} != {(vocab_size, c.d_w)}")
        store.add("news.word_embedding", word_table, requires_grad=c.embedding_mode != "frozen")
        TextViewParams.create(init, "news.title", c.d_w, c.n_f, c.window, c.d_a)
        TextViewParams.create(init, "news.abstract", c.d_w, c.n_f, c.window, c.d_a)
        if c.category_views:
            CategoryViewParams.create(init, "news.category", n_categories, c.d_c, c.n_f)
            CategoryViewParams.create(init, "news.subcategory", n_subcategories, c.d_c, c.n_f)
        ViewAttentionParams.create(init, "news.view_att", c.n_f, c.d_a)
        table = init.rng.normal(0.0, 0.1, (n_users + 1, c.n_f))
        table[-1] = 0.0
        store.add("user.long_term", table)
        create_lstm(init, "user.lstm", c.n_f, c.n_f)
        CandidateAttentionParams.create(init, "user.cand_att", c.n_f, c.d_att)
        if c.predictor == "neural":
            MLPParams.create(init, "predictor", 2 * c.n_f, c.predictor_hidden)
        return cls(config, store, news, n_categories, n_subcategories, n_users)

    def _bind(self) -> None:
        s, c = self.store, self.config
        self.news_params = NewsEncoderParams(
            word_table=s["news.word_embedding"],
            title=TextViewParams.bind(s, "news.title"),
            abstract=TextViewParams.bind(s, "news.abstract"),
            category=CategoryViewParams.bind(s, "news.category") if c.category_views else None,
            subcategory=CategoryViewParams.bind(s, "news.subcategory") if c.category_views else None,
            view_att=ViewAttentionParams.bind(s, "news.view_att"))
        self.user_params = UserEncoderParams(
            user_table=s["user.long_term"], lstm=bind_lstm(s, "user.lstm"),
            cand_att=CandidateAttentionParams.bind(s, "user.cand_att"))
        self.predictor_params = (MLPParams.bind(s, "predictor", len(c.predictor_hidden) + 1)
                                 if c.predictor == "neural" else None)

    # ------------------------------------------------------------ forward

    def encode_news(self, news_idx, mode: str = "eval", rng: RngState | None = None) -> NewsVector:
        c = self.config
        return encode_news(self.news.select(news_idx), self.news_params, mode, c.dropout, rng,
                           c.word_attention)

    def predict(self, u: Tensor, r_c: Tensor) -> Tensor:
        if self.predictor_params is None:
            return dot_score(u, r_c)
        return dnn_score(u, r_c, self.predictor_params)

    def score_vectors(self, user_ids, history_vecs: Tensor, history_mask, cand_vecs: Tensor):
        user = encode_user(user_ids, history_vecs, history_mask, cand_vecs, self.user_params)
        return self.predict(user.u, cand_vecs), user

    def forward(self, user_ids, history, history_mask, candidates, mode: str = "eval",
                rng: RngState | None = None) -> Scores:
        """Scores [B, C] for candidates [B, C] given padded histories [B, H].

        Every distinct article in the batch is encoded once.
        """
        history = np.asarray(history, dtype=np.int64)
        history_mask = np.asarray(history_mask, dtype=bool)
        candidates = np.asarray(candidates, dtype=np.int64)
        unique = np.unique(np.concatenate([candidates.reshape(-1), history[history_mask]]))
        news = self.encode_news(unique, mode, rng)
        hist_pos = np.searchsorted(unique, np.where(history_mask, history, unique[0]))
        cand_pos = np.searchsorted(unique, candidates)
        hist_vecs = T.take(news.r, hist_pos)
        cand_vecs = T.take(news.r, cand_pos)
        scores, user = self.score_vectors(user_ids, hist_vecs, history_mask, cand_vecs)
        return Scores(scores, news, user)

    def forward_batch(self, batch: Batch, mode: str = "train", rng: RngState | None = None) -> Scores:
        return self.forward(batch.user_ids, batch.history, batch.history_mask, batch.candidates,
                            mode, rng)

    def encode_all_news(self, chunk: int = 512) -> np.ndarray:
        """Eval-mode vectors for every article, without recording a graph."""
        out = []
        with T.no_grad():
            for start in range(0, len(self.news), chunk):
                idx = np.arange(start, min(start + chunk, len(self.news)))
                out.append(self.encode_news(idx, "eval").r.data)
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.config.n_f), np.float32)
