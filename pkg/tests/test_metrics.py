import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from newsrec import metrics as M
from newsrec.errors import NumericError
from newsrec.metrics import ScoredImpression

import metric_oracle


def imp(scores, labels, iid="I"):
    return ScoredImpression(iid, list(scores), list(labels))


def test_auc_perfect():
    assert M.auc(imp([0.9, 0.5, 0.1], [1, 0, 0])) == 1.0


def test_auc_tie_counts_half():
    assert M.auc(imp([0.5, 0.5, 0.1], [1, 0, 0])) == 0.75


def test_auc_all_positive_skips():
    assert M.auc(imp([0.3, 0.2], [1, 1])) is M.SKIP


def test_mrr_first():
    assert M.mrr(imp([0.9, 0.1, 0.2], [1, 0, 0])) == 1.0


def test_mrr_third():
    assert M.mrr(imp([0.1, 0.9, 0.5], [1, 0, 0])) == pytest.approx(1 / 3)


def test_mrr_first_positive_rule():
    scores = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4]
    labels = [0, 1, 0, 0, 1, 0]
    assert M.mrr(imp(scores, labels)) == 0.5


def test_mrr_no_positive_skips():
    assert M.mrr(imp([0.1, 0.2], [0, 0])) is M.SKIP


def test_ndcg_rank_one():
    assert M.ndcg_at_k(imp([0.9, 0.1], [1, 0]), 5) == 1.0


def test_ndcg_rank_two():
    assert M.ndcg_at_k(imp([0.1, 0.9, 0.0], [1, 0, 0]), 5) == pytest.approx(1 / math.log2(3), abs=1e-12)


def test_ndcg_outside_cutoff():
    scores = list(range(10, 0, -1))
    labels = [0] * 10
    labels[6] = 1
    assert M.ndcg_at_k(imp(scores, labels), 5) == 0.0


def test_ndcg_ideal_uses_all_positives():
    # two positives at ranks 1 and 7; ideal places both in the top two
    scores = list(range(10, 0, -1))
    labels = [1, 0, 0, 0, 0, 0, 1, 0, 0, 0]
    assert M.ndcg_at_k(imp(scores, labels), 5) == pytest.approx(1 / (1 + 1 / math.log2(3)))


def test_stable_tie_breaking():
    # all scores tie: the positive's rank is its input position
    assert M.mrr(imp([1.0, 1.0, 1.0], [0, 0, 1])) == pytest.approx(1 / 3)


def test_aggregate_single():
    i = imp([0.1, 0.9, 0.5], [1, 0, 0])
    report = M.aggregate([i])
    assert report.metrics == M.score_impression(i)


def test_aggregate_mean_and_skips():
    a = imp([0.9, 0.1], [1, 0], "a")       # auc 1, mrr 1
    b = imp([0.1, 0.9], [1, 0], "b")       # auc 0, mrr 0.5
    c = imp([0.1, 0.9], [1, 1], "c")       # auc skipped
    report = M.aggregate([a, b, c])
    assert report.metrics["auc"] == 0.5
    assert report.metrics["mrr"] == pytest.approx((1 + 0.5 + 1) / 3)
    assert report.skipped == {"auc": 1, "mrr": 0, "ndcg@5": 0, "ndcg@10": 0}


def test_aggregate_half():
    report = M.aggregate([imp([0.9, 0.1], [1, 0], "a"), imp([0.1, 0.9, 0.0], [1, 0, 0], "b")])
    assert report.metrics["mrr"] == 0.75


def test_aggregate_all_skipped():
    with pytest.raises(NumericError):
        M.aggregate([imp([0.1, 0.2], [0, 0])])


def test_rejects_non_finite():
    with pytest.raises(NumericError):
        imp([float("nan"), 0.1], [1, 0])


def test_prediction_dump_ranks():
    assert M.prediction_lines([imp([0.2, 0.9, 0.5], [0, 1, 0], "I7")]) == ["I7 [3,1,2]"]


def _random_impressions(seed, n, ties=True):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        size = int(rng.integers(2, 51))
        if ties:
            scores = rng.integers(0, 6, size).astype(float) / 5
        else:
            scores = rng.normal(size=size)
        labels = (rng.random(size) < 0.3).astype(int)
        out.append(imp(scores.tolist(), labels.tolist(), f"I{i}"))
    return out


@pytest.mark.parametrize("ties", [True, False])
def test_matches_exhaustive_oracle(ties):
    for i in _random_impressions(7, 300, ties):
        got = M.score_impression(i)
        ref = metric_oracle.all_metrics(i.scores, i.labels)
        for name in M.METRICS:
            if ref[name] is None:
                assert got[name] is None
            else:
                assert abs(got[name] - ref[name]) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=30), st.data())
def test_monotone_transform_invariance(scores, data):
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
    moved_scores = [math.exp(s) * 3 + 1 for s in scores]
    # float rounding can merge nearby values; only strictly order-preserving cases count
    assume(all((a < b) == (x < y) and (a == b) == (x == y)
               for a, x in zip(scores, moved_scores) for b, y in zip(scores, moved_scores)))
    base = M.score_impression(imp(scores, labels))
    moved = M.score_impression(imp(moved_scores, labels))
    assert base == moved
    for v in base.values():
        assert v is None or 0.0 <= v <= 1.0


def test_random_scores_auc_half():
    rng = np.random.default_rng(3)
    imps = [imp(rng.random(10).tolist(), [1] * 5 + [0] * 5, str(i)) for i in range(10_000)]
    assert abs(M.aggregate(imps).metrics["auc"] - 0.5) <= 0.02
