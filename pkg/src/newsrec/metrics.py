"""Per-impression ranking metrics and their aggregation.

Ties: AUC counts a tied positive/negative pair as half a win; rank-based
metrics order candidates by descending score with a stable sort, so tied
candidates keep their input order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

SKIP = None
METRICS = ("auc", "mrr", "ndcg@5", "ndcg@10")


@dataclass
class ScoredImpression:
    impression_id: str
    scores: list[float]
    labels: list[int]

    def __post_init__(self):
        if not self.scores:
            raise ValueError(f"impression {self.impression_id} has no candidates")
        if len(self.scores) != len(self.labels):
            raise ValueError("scores and labels differ in length")
        if not all(math.isfinite(s) for s in self.scores):
            raise NumericError(f"impression {self.impression_id} has non-finite scores")


def _ranked_labels(imp: ScoredImpression) -> np.ndarray:
    order = np.argsort(-np.asarray(imp.scores, dtype=np.float64), kind="stable")
    return np.asarray(imp.labels)[order]


def auc(imp: ScoredImpression) -> float | None:
    scores = np.asarray(imp.scores, dtype=np.float64)
    labels = np.asarray(imp.labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if not len(pos) or not len(neg):
        return SKIP
    # rank-sum form: average ranks handle ties as half-wins
    ranks = _average_ranks(np.concatenate([pos, neg]))
    u = ranks[:len(pos)].sum() - len(pos) * (len(pos) + 1) / 2
    return float(u / (len(pos) * len(neg)))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def mrr(imp: ScoredImpression) -> float | None:
    ranked = _ranked_labels(imp)
    hits = np.flatnonzero(ranked == 1)
    if not len(hits):
        return SKIP
    return 1.0 / (hits[0] + 1)


def ndcg_at_k(imp: ScoredImpression, k: int) -> float | None:
    ranked = _ranked_labels(imp)
    n_pos = int((ranked == 1).sum())
    if not n_pos:
        return SKIP
    discounts = 1.0 / np.log2(np.arange(2, len(ranked) + 2))
    dcg = float((ranked[:k] * discounts[:k]).sum())
    ideal = float(discounts[:min(k, n_pos)].sum())
    return dcg / ideal


def score_impression(imp: ScoredImpression) -> dict[str, float | None]:
    return {"auc": auc(imp), "mrr": mrr(imp), "ndcg@5": ndcg_at_k(imp, 5),
            "ndcg@10": ndcg_at_k(imp, 10)}


@dataclass
class EvalReport:
    metrics: dict[str, float]
    counts: dict[str, int]
    skipped: dict[str, int]
    impressions: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metrics": self.metrics, "counts": self.counts, "skipped": self.skipped,
                "impressions": self.impressions, "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def aggregate(imps: list[ScoredImpression], metadata: dict | None = None) -> EvalReport:
    """Unweighted mean of each metric over the impressions where it is defined."""
    values = {m: [] for m in METRICS}
    for imp in imps:
        for m, v in score_impression(imp).items():
            if v is not SKIP:
                values[m].append(v)
    if not any(values.values()):
        raise NumericError("every impression was skipped; no metric is defined")
    metrics = {m: math.fsum(v) / len(v) if v else float("nan") for m, v in values.items()}
    counts = {m: len(v) for m, v in values.items()}
    skipped = {m: len(imps) - len(v) for m, v in values.items()}
    return EvalReport(metrics, counts, skipped, len(imps), dict(metadata or {}))


def prediction_lines(imps: list[ScoredImpression]) -> list[str]:
    """``"<impression_id> [r1,r2,...]"`` with 1-based ranks in candidate order."""
    lines = []
    for imp in imps:
        order = np.argsort(-np.asarray(imp.scores, dtype=np.float64), kind="stable")
        ranks = np.empty(len(order), dtype=np.int64)
        ranks[order] = np.arange(1, len(order) + 1)
        lines.append(f"{imp.impression_id} [{','.join(str(r) for r in ranks)}]")
    return lines


def prediction_jsonl(imps: list[ScoredImpression]) -> list[str]:
    return [json.dumps({"impression_id": imp.impression_id,
                        "scores": [float(s) for s in imp.scores],
                        "labels": [int(x) for x in imp.labels]}) for imp in imps]
