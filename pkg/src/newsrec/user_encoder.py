"""Long/short-term user encoder with candidate-aware history attention.

The long-term vector is a row of a trainable user table and seeds the LSTM
hidden state; the LSTM runs over clicked-news vectors oldest to newest. A
feed-forward scorer weights each clicked news against the candidate, and the
final user vector is the elementwise product of the LSTM output and that
attention summary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import UNKNOWN_USER
from .init import Initializer
from .tensor import LSTMWeights, Tensor


@dataclass
class CandidateAttentionParams:
    hidden_weight: Tensor   # [d_att, 2 n_f], history half first
    hidden_bias: Tensor     # [d_att]
    out_weight: Tensor      # [1, d_att]
    out_bias: Tensor        # [1]

    @classmethod
    def create(cls, init: Initializer, prefix: str, n_f: int, d_att: int):
        return cls(init.glorot(f"{prefix}.hidden.weight", (d_att, 2 * n_f)),
                   init.zeros(f"{prefix}.hidden.bias", (d_att,)),
                   init.glorot(f"{prefix}.out.weight", (1, d_att)),
                   init.zeros(f"{prefix}.out.bias", (1,)))

    @classmethod
    def bind(cls, store, prefix: str):
        return cls(store[f"{prefix}.hidden.weight"], store[f"{prefix}.hidden.bias"],
                   store[f"{prefix}.out.weight"], store[f"{prefix}.out.bias"])


@dataclass
class UserEncoderParams:
    user_table: Tensor                  # [n_users + 1, n_f], last row = unknown user
    lstm: LSTMWeights
    cand_att: CandidateAttentionParams


def create_lstm(init: Initializer, prefix: str, d_in: int, hidden: int) -> LSTMWeights:
    return LSTMWeights(init.glorot(f"{prefix}.w_input", (4 * hidden, d_in), d_in, hidden),
                       init.glorot(f"{prefix}.w_hidden", (4 * hidden, hidden), hidden, hidden),
                       init.zeros(f"{prefix}.bias", (4 * hidden,)))


def bind_lstm(store, prefix: str) -> LSTMWeights:
    return LSTMWeights(store[f"{prefix}.w_input"], store[f"{prefix}.w_hidden"], store[f"{prefix}.bias"])


@dataclass
class UserVector:
    u: Tensor            # [B, C, n_f]
    u_short: Tensor      # [B, n_f]
    u_long: Tensor       # [B, n_f]
    u_att: Tensor        # [B, C, n_f], zero where history is empty
    weights: Tensor      # [B, C, H]


def lookup_long_term(user_ids, table: Tensor) -> Tensor:
    """Rows of the user table; ``UNKNOWN_USER`` maps to the last row."""
    ids = np.asarray(user_ids, dtype=np.int64)
    unknown = table.shape[0] - 1
    if np.any(ids > unknown):
        raise IndexError(f"user id {int(ids[ids > unknown][0])} exceeds table size {table.shape[0]}")
    return T.embedding_lookup(table, np.where(ids == UNKNOWN_USER, unknown, ids))


def encode_short_term(history: Tensor, mask, u_long: Tensor, lstm: LSTMWeights) -> Tensor:
    """Last LSTM hidden state over [B, H, n_f] history with h0 = u_long, c0 = 0.

    Rows with an empty history return ``u_long``.
    """
    if history.shape[-1] != lstm.w_input.shape[1] or u_long.shape[-1] != lstm.hidden_size:
        raise ValueError(f"history {history.shape} / long-term {u_long.shape} do not match the LSTM")
    c0 = Tensor(np.zeros(u_long.shape))
    return T.lstm_masked(history, mask, u_long, c0, lstm)


def candidate_attention(history: Tensor, mask, candidates: Tensor,
                        params: CandidateAttentionParams) -> tuple[Tensor, Tensor]:
    """Weight each clicked news by ``H([r_i; r_c])``, softmaxed over history.

    ``history`` is [B, H, n_f], ``candidates`` is [B, C, n_f]. Returns
    ``u_att`` [B, C, n_f] and weights [B, C, H]; empty histories give zeros.
    The hidden layer's weight is split column-wise so the concatenation is
    never materialised.
    """
    n_f = history.shape[-1]
    w_hist = T.take(params.hidden_weight, (slice(None), slice(0, n_f)))
    w_cand = T.take(params.hidden_weight, (slice(None), slice(n_f, 2 * n_f)))
    h_part = T.linear(history, w_hist)                          # [B, H, d_att]
    c_part = T.linear(candidates, w_cand, params.hidden_bias)   # [B, C, d_att]
    b, h, d_att = h_part.shape
    c = c_part.shape[1]
    hidden = T.tanh(T.reshape(h_part, (b, 1, h, d_att)) + T.reshape(c_part, (b, c, 1, d_att)))
    scores = T.reshape(T.linear(hidden, params.out_weight, params.out_bias), (b, c, h))
    mask = np.asarray(mask, dtype=bool)
    weights = T.masked_softmax(scores, mask[:, None, :], axis=-1, allow_empty=True)
    u_att = T.matmul(weights, history)                          # [B, C, n_f]
    return u_att, weights


def encode_user(user_ids, history: Tensor, mask, candidates: Tensor,
                params: UserEncoderParams) -> UserVector:
    mask = np.asarray(mask, dtype=bool)
    u_long = lookup_long_term(user_ids, params.user_table)
    u_short = encode_short_term(history, mask, u_long, params.lstm)
    u_att, weights = candidate_attention(history, mask, candidates, params.cand_att)
    # an empty history leaves u_att at zero; substitute the multiplicative identity
    empty = (~mask.any(axis=1)).astype(np.float32)[:, None, None]
    u = T.reshape(u_short, (u_short.shape[0], 1, u_short.shape[1])) * (u_att + empty)
    return UserVector(u, u_short, u_long, u_att, weights)
