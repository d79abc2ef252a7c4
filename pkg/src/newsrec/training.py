"""NCE objective, Adam, and the epoch loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import Impression, build_batches, build_train_samples
from .errors import ConfigError, NumericError
from .metrics import EvalReport, ScoredImpression, aggregate
from .model import NewsRecommender
from .rng import RngState
from .tensor import ParamStore, Tensor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    k: int = 3
    batch_size: int = 128
    lr: float = 1e-4
    epochs: int = 5
    seed: int = 0
    clip_norm: float = 5.0
    log_every: int = 10
    eval_batch_size: int = 64

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1 or self.log_every < 1:
            raise ConfigError("batch_size, epochs and log_every must be >= 1")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be >= 0 (0 disables clipping)")


# ------------------------------------------------------------------ NCE


def nce_pseudo_rank(pos_score, neg_scores) -> float:
    """Softmax probability of the positive among itself and the negatives."""
    neg = np.asarray(neg_scores, dtype=np.float64)
    if neg.size < 1:
        raise ValueError("need at least one negative score")
    z = np.concatenate([[float(pos_score)], neg])
    e = np.exp(z - z.max())
    return float(e[0] / e.sum())


def nce_loss(pseudo_ranks) -> float:
    """Mean of ``-log p`` over a non-empty batch of pseudo-rank scores."""
    p = np.asarray(pseudo_ranks, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(-np.log(p)))


def nce_loss_from_scores(scores: Tensor) -> Tensor:
    """Differentiable batch loss from [B, 1 + K] scores, positive in column 0."""
    log_p = T.take(T.log_softmax(scores, axis=-1), (slice(None), 0))
    return -T.tmean(log_p)


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def check_finite_grads(store: ParamStore) -> None:
    for name, p in store.trainable():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {name}")


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    grads = [p.grad for _, p in store.trainable() if p.grad is not None]
    norm = math.sqrt(math.fsum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


def adam_step(store: ParamStore, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update over the trainable parameters."""
    check_finite_grads(store)
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in store.trainable():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype)
        p.data = p.data - update


# ------------------------------------------------------------------ evaluation


def score_impressions(model: NewsRecommender, impressions: list[Impression],
                      batch_size: int = 64) -> list[ScoredImpression]:
    """Score every candidate of every impression in eval mode."""
    vectors = model.encode_all_news()
    out = []
    usable = [imp for imp in impressions if imp.candidates]
    with T.no_grad():
        for start in range(0, len(usable), batch_size):
            chunk = usable[start:start + batch_size]
            hist_w = max(1, max(len(i.history) for i in chunk))
            cand_w = max(len(i.candidates) for i in chunk)
            hist = np.zeros((len(chunk), hist_w), dtype=np.int64)
            mask = np.zeros((len(chunk), hist_w), dtype=bool)
            cands = np.zeros((len(chunk), cand_w), dtype=np.int64)
            for row, imp in enumerate(chunk):
                hist[row, :len(imp.history)] = imp.history
                mask[row, :len(imp.history)] = True
                ids = [n for n, _ in imp.candidates]
                cands[row, :len(ids)] = ids
            users = np.array([imp.user_id for imp in chunk], dtype=np.int64)
            scores, _ = model.score_vectors(users, Tensor(vectors[hist]), mask, Tensor(vectors[cands]))
            for row, imp in enumerate(chunk):
                n = len(imp.candidates)
                out.append(ScoredImpression(imp.impression_id,
                                            [float(s) for s in scores.data[row, :n]],
                                            [label for _, label in imp.candidates]))
    return out


def evaluate(model: NewsRecommender, impressions: list[Impression], batch_size: int = 64,
             metadata: dict | None = None) -> tuple[EvalReport, list[ScoredImpression]]:
    scored = score_impressions(model, impressions, batch_size)
    return aggregate(scored, metadata), scored


# ------------------------------------------------------------------ loop


@dataclass
class EpochResult:
    epoch: int
    train_loss: float
    samples: int
    val: EvalReport | None


@dataclass
class TrainResult:
    epochs: list[EpochResult]
    best_epoch: int
    best_state: dict[str, np.ndarray]
    loss_rows: list[tuple[int, int, float]]
    adam: AdamState
    rng_state: dict

    @property
    def epoch_losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]


def train(model: NewsRecommender, train_impressions: list[Impression], config: TrainConfig,
          val_impressions: list[Impression] | None = None, on_epoch=None,
          timing_path: Path | None = None) -> TrainResult:
    """Train in place; the best-validation-AUC parameters are kept in the result.

    ``on_epoch(result, model, adam, rng)`` runs after every epoch (checkpointing hook).
    Wall-clock times go to ``timing_path`` only, keeping the loss log
    reproducible.
    """
    config.validate()
    if not train_impressions:
        raise ConfigError("training set is empty")
    rng = RngState(config.seed, "train")
    store = model.store
    adam = AdamState()
    loss_rows: list[tuple[int, int, float]] = []
    timing_rows = []
    epochs: list[EpochResult] = []
    best_auc, best_epoch, best_state = -math.inf, 0, store.state_dict()
    started = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        samples, _ = build_train_samples(train_impressions, config.k, rng.child(f"neg/{epoch}"))
        if not samples:
            raise ConfigError("no training samples: every impression lacks a click or a non-click")
        total, count = 0.0, 0
        for b, batch in enumerate(build_batches(samples, config.batch_size,
                                                rng.child(f"shuffle/{epoch}"))):
            out = model.forward_batch(batch, "train", rng.child(f"dropout/{epoch}/{b}"))
            loss = nce_loss_from_scores(out.scores)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {b}")
            T.backward(loss, store)
            check_finite_grads(store)
            clip_grad_norm(store, config.clip_norm)
            adam_step(store, adam, config.lr)
            total += value * len(batch)
            count += len(batch)
            if b % config.log_every == 0:
                loss_rows.append((epoch, b, value))
                timing_rows.append((epoch, b, time.perf_counter() - started))
        train_loss = total / count
        report = None
        if val_impressions:
            report, _ = evaluate(model, val_impressions, config.eval_batch_size)
            auc = report.metrics["auc"]
            if not math.isfinite(auc):
                raise NumericError(f"validation AUC is {auc} at epoch {epoch}")
            if auc > best_auc:
                best_auc, best_epoch, best_state = auc, epoch, store.state_dict()
        else:
            best_epoch, best_state = epoch, store.state_dict()
        result = EpochResult(epoch, train_loss, count, report)
        epochs.append(result)
        log.info("epoch %d loss %.4f%s", epoch, train_loss,
                 f" val auc {report.metrics['auc']:.4f}" if report else "")
        if on_epoch is not None:
            on_epoch(result, model, adam, rng)
    if timing_path is not None:
        with open(timing_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "batch", "wall_time_s"])
            w.writerows((e, b, f"{s:.3f}") for e, b, s in timing_rows)
    return TrainResult(epochs, best_epoch, best_state, loss_rows, adam, rng.get_state())


def write_metrics_csv(path, result: TrainResult) -> None:
    """Per-batch loss rows followed by per-epoch summary rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "epoch", "batch", "loss", "val_auc", "val_mrr", "val_ndcg@5",
                    "val_ndcg@10"])
        for epoch, batch, loss in result.loss_rows:
            w.writerow(["batch", epoch, batch, repr(loss), "", "", "", ""])
        for e in result.epochs:
            vals = [repr(e.val.metrics[m]) for m in ("auc", "mrr", "ndcg@5", "ndcg@10")] \
                if e.val else ["", "", "", ""]
            w.writerow(["epoch", e.epoch, "", repr(e.train_loss), *vals])


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
