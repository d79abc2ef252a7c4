"""Multi-view news encoder.

Title and abstract each go through word lookup, a same-length CNN with
ReLU and additive word attention. Category and subcategory ids go through an
embedding plus a ReLU projection. View-level additive attention fuses the
per-view vectors into one news vector.

All functions work on batches: token ids are [N, L], lengths are [N].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .init import Initializer
from .rng import RngState
from .tensor import Tensor


@dataclass
class TextViewParams:
    conv_weight: Tensor   # [n_f, 2k+1, d_w]
    conv_bias: Tensor     # [n_f]
    att_weight: Tensor    # [d_a, n_f]
    att_bias: Tensor      # [d_a]
    att_query: Tensor     # [d_a]

    @classmethod
    def create(cls, init: Initializer, prefix: str, d_w: int, n_f: int, window: int, d_a: int):
        return cls(
            conv_weight=init.glorot(f"{prefix}.conv.weight", (n_f, window, d_w),
                                    fan_in=window * d_w, fan_out=n_f),
            conv_bias=init.zeros(f"{prefix}.conv.bias", (n_f,)),
            att_weight=init.glorot(f"{prefix}.att.weight", (d_a, n_f)),
            att_bias=init.zeros(f"{prefix}.att.bias", (d_a,)),
            att_query=init.glorot(f"{prefix}.att.query", (d_a,), fan_in=d_a, fan_out=1))

    @classmethod
    def bind(cls, store, prefix: str):
        return cls(store[f"{prefix}.conv.weight"], store[f"{prefix}.conv.bias"],
                   store[f"{prefix}.att.weight"], store[f"{prefix}.att.bias"],
                   store[f"{prefix}.att.query"])


@dataclass
class CategoryViewParams:
    embedding: Tensor     # [n_cat, d_c]
    proj_weight: Tensor   # [n_f, d_c]
    proj_bias: Tensor     # [n_f]

    @classmethod
    def create(cls, init: Initializer, prefix: str, n_cat: int, d_c: int, n_f: int,
               table: np.ndarray | None = None):
        if table is not None:
            emb = init.store.add(f"{prefix}.embedding", table)
        else:
            emb = init.normal(f"{prefix}.embedding", (n_cat, d_c), 0.1)
        return cls(emb, init.glorot(f"{prefix}.proj.weight", (n_f, d_c)),
                   init.zeros(f"{prefix}.proj.bias", (n_f,)))

    @classmethod
    def bind(cls, store, prefix: str):
        return cls(store[f"{prefix}.embedding"], store[f"{prefix}.proj.weight"],
                   store[f"{prefix}.proj.bias"])


@dataclass
class ViewAttentionParams:
    weight: Tensor        # [d_a, n_f]
    bias: Tensor          # [d_a]
    query: Tensor         # [d_a]

    @classmethod
    def create(cls, init: Initializer, prefix: str, n_f: int, d_a: int):
        return cls(init.glorot(f"{prefix}.weight", (d_a, n_f)), init.zeros(f"{prefix}.bias", (d_a,)),
                   init.glorot(f"{prefix}.query", (d_a,), fan_in=d_a, fan_out=1))

    @classmethod
    def bind(cls, store, prefix: str):
        return cls(store[f"{prefix}.weight"], store[f"{prefix}.bias"], store[f"{prefix}.query"])


@dataclass
class NewsVector:
    r: Tensor                      # [N, n_f]
    view_weights: Tensor           # [N, n_views], columns follow ``views``
    views: tuple[str, ...]
    title_weights: Tensor | None = None      # [N, L_t]
    abstract_weights: Tensor | None = None   # [N, L_a]


def additive_scores(x: Tensor, weight: Tensor, bias: Tensor, query: Tensor) -> Tensor:
    """``q . tanh(W x + b)`` over the last axis of ``x``."""
    return T.matmul(T.tanh(T.linear(x, weight, bias)), query)


def encode_text_view(token_ids, lengths, word_table: Tensor, params: TextViewParams,
                     mode: str = "eval", dropout: float = 0.0, rng: RngState | None = None,
                     word_attention: bool = True) -> tuple[Tensor, Tensor]:
    """Encode one text view; returns ``(r [N, n_f], weights [N, L])``.

    Positions at or beyond ``length`` are zeroed before the convolution, so
    whatever ids sit in the padded tail never reach the output. Rows with
    length 0 produce a zero vector and all-zero weights.
    """
    token_ids = np.asarray(token_ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    width = max(1, int(lengths.max(initial=0)))
    token_ids = token_ids[:, :width]
    mask = np.arange(width)[None, :] < lengths[:, None]
    emb = T.embedding_lookup(word_table, np.where(mask, token_ids, 0))
    emb = emb * mask[..., None].astype(emb.data.dtype)
    emb = T.dropout(emb, dropout, mode, rng and rng.child("emb"))
    ctx = T.relu(T.conv1d_same(emb, params.conv_weight, params.conv_bias))
    ctx = T.dropout(ctx, dropout, mode, rng and rng.child("cnn"))
    if word_attention:
        scores = additive_scores(ctx, params.att_weight, params.att_bias, params.att_query)
    else:
        scores = Tensor(np.zeros(mask.shape))
    alpha = T.masked_softmax(scores, mask, axis=-1, allow_empty=True)
    r = T.tsum(ctx * T.reshape(alpha, alpha.shape + (1,)), axis=-2)
    return r, alpha


def encode_category_view(ids, params: CategoryViewParams) -> Tensor:
    emb = T.embedding_lookup(params.embedding, np.asarray(ids, dtype=np.int64))
    return T.relu(T.linear(emb, params.proj_weight, params.proj_bias))


def fuse_views(views: list[Tensor], params: ViewAttentionParams) -> tuple[Tensor, Tensor]:
    """Softmax-weighted sum of view vectors; returns ``(r [N, n_f], weights [N, V])``."""
    stacked = T.stack(views, axis=-2)                       # [N, V, n_f]
    scores = additive_scores(stacked, params.weight, params.bias, params.query)
    weights = T.masked_softmax(scores, None, axis=-1)
    r = T.tsum(stacked * T.reshape(weights, weights.shape + (1,)), axis=-2)
    return r, weights


@dataclass
class NewsEncoderParams:
    word_table: Tensor
    title: TextViewParams
    abstract: TextViewParams
    category: CategoryViewParams | None
    subcategory: CategoryViewParams | None
    view_att: ViewAttentionParams


@dataclass
class NewsFeatures:
    """Column arrays for a set of articles, indexed by news position."""
    title_ids: np.ndarray
    title_len: np.ndarray
    abstract_ids: np.ndarray
    abstract_len: np.ndarray
    category: np.ndarray
    subcategory: np.ndarray

    @classmethod
    def from_articles(cls, articles) -> "NewsFeatures":
        return cls(
            title_ids=np.array([a.title_ids for a in articles], dtype=np.int64),
            title_len=np.array([a.title_len for a in articles], dtype=np.int64),
            abstract_ids=np.array([a.abstract_ids for a in articles], dtype=np.int64),
            abstract_len=np.array([a.abstract_len for a in articles], dtype=np.int64),
            category=np.array([a.category_id for a in articles], dtype=np.int64),
            subcategory=np.array([a.subcategory_id for a in articles], dtype=np.int64))

    def __len__(self) -> int:
        return len(self.title_len)

    def select(self, idx) -> "NewsFeatures":
        idx = np.asarray(idx, dtype=np.int64)
        return NewsFeatures(self.title_ids[idx], self.title_len[idx], self.abstract_ids[idx],
                            self.abstract_len[idx], self.category[idx], self.subcategory[idx])


def encode_news(feats: NewsFeatures, params: NewsEncoderParams, mode: str = "eval",
                dropout: float = 0.0, rng: RngState | None = None,
                word_attention: bool = True) -> NewsVector:
    r_t, a_t = encode_text_view(feats.title_ids, feats.title_len, params.word_table, params.title,
                                mode, dropout, rng and rng.child("title"), word_attention)
    r_a, a_a = encode_text_view(feats.abstract_ids, feats.abstract_len, params.word_table,
                                params.abstract, mode, dropout, rng and rng.child("abstract"),
                                word_attention)
    views, names = [r_t, r_a], ("title", "abstract")
    if params.category is not None:
        views += [encode_category_view(feats.category, params.category),
                  encode_category_view(feats.subcategory, params.subcategory)]
        names += ("category", "subcategory")
    r, weights = fuse_views(views, params.view_att)
    return NewsVector(r, weights, names, a_t, a_a)
