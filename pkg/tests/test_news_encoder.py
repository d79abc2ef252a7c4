import numpy as np
import pytest

from newsrec import tensor as T
from newsrec.init import Initializer
from newsrec.news_encoder import (CategoryViewParams, NewsEncoderParams, NewsFeatures,
                                  TextViewParams, ViewAttentionParams, encode_category_view,
                                  encode_news, encode_text_view, fuse_views)
from newsrec.rng import RngState
from newsrec.tensor import ParamStore, Tensor

V, D_W, N_F, D_A, D_C = 30, 6, 5, 4, 3


def _params(seed=0, category=True):
    store = ParamStore()
    init = Initializer(store, RngState(seed))
    table = init.rng.normal(0, 0.5, (V, D_W))
    table[0] = 0
    words = store.add("words", table)
    title = TextViewParams.create(init, "t", D_W, N_F, 3, D_A)
    abstract = TextViewParams.create(init, "a", D_W, N_F, 3, D_A)
    cat = CategoryViewParams.create(init, "c", 4, D_C, N_F) if category else None
    sub = CategoryViewParams.create(init, "s", 5, D_C, N_F) if category else None
    view = ViewAttentionParams.create(init, "v", N_F, D_A)
    return store, NewsEncoderParams(words, title, abstract, cat, sub, view)


def _feats(rng, n, lt=7, la=9):
    t_len = rng.integers(1, lt + 1, n)
    a_len = rng.integers(0, la + 1, n)
    t_ids = rng.integers(2, V, (n, lt)) * (np.arange(lt) < t_len[:, None])
    a_ids = rng.integers(2, V, (n, la)) * (np.arange(la) < a_len[:, None])
    return NewsFeatures(t_ids, t_len, a_ids, a_len, rng.integers(0, 4, n), rng.integers(0, 5, n))


def _np(t):
    return t.data.astype(np.float64)


def oracle_text_view(ids, length, table, p):
    """Loop-based reference for one article."""
    x = _np(table)[ids[:length]]                                  # [n, d_w]
    w, b = _np(p.conv_weight), _np(p.conv_bias)
    half = w.shape[1] // 2
    padded = np.vstack([np.zeros((half, x.shape[1])), x, np.zeros((half, x.shape[1]))])
    c = np.array([[max(0.0, float(np.sum(w[f] * padded[i:i + w.shape[1]]) + b[f]))
                   for f in range(w.shape[0])] for i in range(length)])
    a = np.array([_np(p.att_query) @ np.tanh(_np(p.att_weight) @ ci + _np(p.att_bias)) for ci in c])
    alpha = np.exp(a - a.max()) / np.exp(a - a.max()).sum()
    return alpha @ c, alpha


def test_text_view_matches_loop_oracle():
    store, params = _params()
    rng = np.random.default_rng(1)
    feats = _feats(rng, 6)
    r, alpha = encode_text_view(feats.title_ids, feats.title_len, params.word_table, params.title)
    for i in range(6):
        ref_r, ref_a = oracle_text_view(feats.title_ids[i], feats.title_len[i], params.word_table,
                                        params.title)
        np.testing.assert_allclose(r.data[i], ref_r, atol=1e-5)
        np.testing.assert_allclose(alpha.data[i, :feats.title_len[i]], ref_a, atol=1e-5)


def test_single_word_gets_full_weight():
    _, params = _params()
    _, alpha = encode_text_view([[5, 0, 0]], [1], params.word_table, params.title)
    assert alpha.data[0].tolist() == [1.0]


def test_identical_words_get_equal_weight():
    _, params = _params()
    params.title.conv_weight.data[:] = 0.0
    params.title.conv_bias.data[:] = 0.3
    _, alpha = encode_text_view([[7, 7]], [2], params.word_table, params.title)
    np.testing.assert_allclose(alpha.data[0], [0.5, 0.5], atol=1e-7)


def test_empty_abstract_gives_zero_view_and_normalised_fusion():
    _, params = _params()
    feats = NewsFeatures(np.array([[3, 4, 0]]), np.array([2]), np.zeros((1, 4), np.int64),
                         np.array([0]), np.array([1]), np.array([2]))
    out = encode_news(feats, params)
    assert np.all(out.abstract_weights.data == 0)
    assert abs(float(out.view_weights.data.sum()) - 1.0) <= 1e-6


def test_padded_tail_ignored():
    _, params = _params()
    ids = np.array([[3, 4, 5, 0, 0], [3, 4, 5, 9, 11]])
    r, _ = encode_text_view(ids, [3, 3], params.word_table, params.title)
    assert r.data[0].tobytes() == r.data[1].tobytes()


def test_category_view_zero_params_give_zero():
    _, params = _params()
    for t in (params.category.embedding, params.category.proj_weight, params.category.proj_bias):
        t.data[:] = 0.0
    assert np.all(encode_category_view([0, 1, 2], params.category).data == 0.0)


def test_category_view_formula_and_nonnegative():
    _, params = _params()
    out = encode_category_view([0, 3, 3], params.category).data
    p = params.category
    ref = np.maximum(0.0, _np(p.embedding)[[0, 3, 3]] @ _np(p.proj_weight).T + _np(p.proj_bias))
    np.testing.assert_allclose(out, ref, atol=1e-6)
    assert np.all(out >= 0)


def test_fuse_identical_views_returns_view():
    _, params = _params()
    v = Tensor(np.random.default_rng(2).normal(size=(3, N_F)))
    r, w = fuse_views([v, v, v, v], params.view_att)
    np.testing.assert_allclose(r.data, v.data, atol=1e-6)
    np.testing.assert_allclose(w.data, 0.25, atol=1e-7)


def test_fuse_zero_query_is_uniform():
    _, params = _params()
    params.view_att.query.data[:] = 0.0
    rng = np.random.default_rng(3)
    views = [Tensor(rng.normal(size=(2, N_F))) for _ in range(4)]
    r, w = fuse_views(views, params.view_att)
    assert np.all(w.data == 0.25)
    np.testing.assert_allclose(r.data, np.mean([v.data for v in views], axis=0), atol=1e-6)


def test_fuse_matches_formula():
    _, params = _params()
    rng = np.random.default_rng(4)
    views = [rng.normal(size=N_F) for _ in range(4)]
    r, w = fuse_views([Tensor(v[None]) for v in views], params.view_att)
    p = params.view_att
    a = np.array([_np(p.query) @ np.tanh(_np(p.weight) @ v + _np(p.bias)) for v in views])
    ref_w = np.exp(a) / np.exp(a).sum()
    np.testing.assert_allclose(w.data[0], ref_w, atol=1e-6)
    np.testing.assert_allclose(r.data[0], ref_w @ np.array(views), atol=1e-5)


def test_views_are_isolated():
    # perturbing the abstract leaves the title view untouched
    _, params = _params()
    rng = np.random.default_rng(5)
    feats = _feats(rng, 4)
    before = encode_news(feats, params)
    feats.abstract_ids = rng.integers(2, V, feats.abstract_ids.shape)
    feats.abstract_len[:] = feats.abstract_ids.shape[1]
    after = encode_news(feats, params)
    assert np.any(before.r.data != after.r.data)
    assert np.array_equal(before.title_weights.data, after.title_weights.data)


def test_batch_of_one_matches_batch():
    _, params = _params()
    feats = _feats(np.random.default_rng(6), 5)
    full = encode_news(feats, params).r.data
    for i in range(5):
        single = encode_news(feats.select([i]), params).r.data
        np.testing.assert_allclose(single[0], full[i], rtol=0, atol=1e-6)


def test_attention_weights_normalised_random():
    _, params = _params()
    feats = _feats(np.random.default_rng(7), 200)
    out = encode_news(feats, params)
    assert np.all(np.abs(out.title_weights.data.sum(axis=1) - 1) <= 1e-6)
    a_sum = out.abstract_weights.data.sum(axis=1)
    assert np.all(np.where(feats.abstract_len > 0, np.abs(a_sum - 1), a_sum) <= 1e-6)
    assert np.all(np.abs(out.view_weights.data.sum(axis=1) - 1) <= 1e-6)


def test_no_category_views_gives_two_weights():
    _, params = _params(category=False)
    out = encode_news(_feats(np.random.default_rng(8), 3), params)
    assert out.view_weights.shape == (3, 2) and out.views == ("title", "abstract")


def test_train_mode_dropout_reproducible():
    _, params = _params()
    feats = _feats(np.random.default_rng(9), 3)
    a = encode_news(feats, params, "train", 0.3, RngState(1)).r.data
    b = encode_news(feats, params, "train", 0.3, RngState(1)).r.data
    c = encode_news(feats, params, "eval", 0.3, None).r.data
    assert a.tobytes() == b.tobytes() and a.tobytes() != c.tobytes()


def test_news_encoder_gradients():
    store, params = _params()
    feats = _feats(np.random.default_rng(10), 3, lt=4, la=4)
    probe = Tensor(np.random.default_rng(11).normal(size=(3, N_F)))
    err = T.grad_check(lambda: (encode_news(feats, params).r * probe).sum(), store, eps=1e-5)
    assert err <= 1e-2


def test_unknown_word_id_raises():
    _, params = _params()
    with pytest.raises(IndexError, match="99"):
        encode_text_view([[99]], [1], params.word_table, params.title)
