"""Sentence-level and element-level self-attention blocks."""

import numpy as np
import pytest

from dhan import tensor as T
from dhan.element_attention import N_ELEMENTS, element_attend, pool_elements
from dhan.sentence_attention import (
    column_mask,
    pool_news_content,
    sentence_attend,
    stack_block,
)
from dhan.tensor import ParamStore, ShapeError, Tensor, grad_check


def sent_inputs(rng, K=20, d=64, masked=()):
    u = Tensor(rng.normal(size=(1, d)))
    sents = Tensor(rng.normal(size=(K, d)))
    cand = Tensor(rng.normal(size=(1, d)))
    pad = np.ones(K, dtype=bool)
    for i in masked:
        pad[i] = False
    return u, sents, cand, pad


def sent_weights(rng, d=64):
    return tuple(Tensor(rng.normal(size=(d, d)) * 0.1, requires_grad=True) for _ in range(3))


# -- sentence attention ------------------------------------------------------


def test_sentence_shapes_at_paper_dims(rng):
    u, sents, cand, pad = sent_inputs(rng, K=20, d=64)
    w1, w2, w3 = sent_weights(rng, 64)
    attended, beta = sentence_attend(u, sents, cand, pad, w1, w2, w3)
    assert attended.shape == (22, 64)
    assert beta.shape == (22, 22)


def test_sentence_rows_stochastic(rng):
    u, sents, cand, pad = sent_inputs(rng, K=6, d=8, masked=(2, 5))
    w1, w2, w3 = sent_weights(rng, 8)
    _, beta = sentence_attend(u, sents, cand, pad, w1, w2, w3)
    np.testing.assert_allclose(beta.detach().sum(axis=-1), 1.0, atol=1e-9)


def test_zero_weights_give_uniform_over_unmasked(rng):
    u, sents, cand, pad = sent_inputs(rng, K=4, d=8, masked=(1,))
    zeros = [Tensor(np.zeros((8, 8)), requires_grad=True) for _ in range(3)]
    _, beta = sentence_attend(u, sents, cand, pad, *zeros)
    b = beta.detach()
    # 5 unmasked of 6 columns; every row spreads 1/5 on them, 0 on the pad
    np.testing.assert_allclose(b[:, [0, 1, 3, 4, 5]], 0.2, atol=1e-9)
    np.testing.assert_allclose(b[:, 2], 0.0, atol=1e-9)


def test_masked_columns_get_zero_weight(rng):
    u, sents, cand, pad = sent_inputs(rng, K=5, d=8, masked=(0, 3))
    w1, w2, w3 = sent_weights(rng, 8)
    _, beta = sentence_attend(u, sents, cand, pad, w1, w2, w3)
    np.testing.assert_allclose(beta.detach()[:, [1, 4]], 0.0, atol=1e-12)


def test_padding_invariance(rng):
    """Values in padded slots must not affect unmasked outputs."""
    d, K = 8, 5
    w = sent_weights(rng, d)
    u = Tensor(rng.normal(size=(1, d)))
    cand = Tensor(rng.normal(size=(1, d)))
    base = rng.normal(size=(K, d))
    pad = np.array([True, True, False, True, False])
    out1, _ = sentence_attend(u, Tensor(base), cand, pad, *w)
    noisy = base.copy()
    noisy[~pad] = rng.normal(size=(2, d)) * 100
    out2, _ = sentence_attend(u, Tensor(noisy), cand, pad, *w)
    keep = np.concatenate([[True], pad, [True]])
    np.testing.assert_allclose(out1.detach()[keep], out2.detach()[keep], atol=1e-9)
    p1 = pool_news_content(out1, pad).detach()
    p2 = pool_news_content(out2, pad).detach()
    np.testing.assert_allclose(p1, p2, atol=1e-9)


def test_stack_block_order(rng):
    u, sents, cand, _ = sent_inputs(rng, K=3, d=4)
    s = stack_block(u, sents, cand).detach()
    np.testing.assert_array_equal(s[0], u.detach()[0])
    np.testing.assert_array_equal(s[1:4], sents.detach())
    np.testing.assert_array_equal(s[4], cand.detach()[0])


def test_column_mask_values():
    m = column_mask(np.array([True, False]))
    assert m.shape == (1, 4)
    np.testing.assert_array_equal(m[0], [0.0, 0.0, -1e9, 0.0])


def test_pool_news_content_mean(rng):
    attended = Tensor(rng.normal(size=(4, 3)))
    pad = np.array([True, False])
    pooled = pool_news_content(attended, pad).detach()
    np.testing.assert_allclose(
        pooled, attended.detach()[[0, 1, 3]].mean(axis=0), atol=1e-12
    )


def test_sentence_attention_grad_check(rng):
    d, K = 8, 4
    u, sents, cand, pad = sent_inputs(rng, K=K, d=d, masked=(2,))
    store = ParamStore()
    for name in ("w1", "w2", "w3"):
        store.add(name, rng.normal(size=(d, d)) * 0.3)

    def f(s):
        attended, _ = sentence_attend(u, sents, cand, pad, s["w1"], s["w2"], s["w3"])
        return T.sum_all(pool_news_content(attended, pad))

    assert grad_check(f, store) < 1e-4


def test_sentence_batched_matches_single(rng):
    d, K, B = 8, 4, 3
    w = sent_weights(rng, d)
    u = rng.normal(size=(B, 1, d))
    sents = rng.normal(size=(B, K, d))
    cand = rng.normal(size=(B, 1, d))
    pad = rng.random((B, K)) > 0.3
    batched, _ = sentence_attend(Tensor(u), Tensor(sents), Tensor(cand), pad, *w)
    for i in range(B):
        single, _ = sentence_attend(
            Tensor(u[i]), Tensor(sents[i]), Tensor(cand[i]), pad[i], *w
        )
        np.testing.assert_allclose(batched.detach()[i], single.detach(), atol=1e-12)


# -- element attention -------------------------------------------------------


def elem_inputs(rng, d=8):
    hist = Tensor(rng.normal(size=(N_ELEMENTS, d)))
    cand = Tensor(rng.normal(size=(N_ELEMENTS, d)))
    w = tuple(Tensor(rng.normal(size=(2 * d, d)) * 0.1, requires_grad=True) for _ in range(3))
    return hist, cand, w


def test_element_shapes(rng):
    hist, cand, w = elem_inputs(rng, d=64)
    attended, gamma = element_attend(hist, cand, *w)
    assert attended.shape == (5, 64)
    assert gamma.shape == (5, 5)
    np.testing.assert_allclose(gamma.detach().sum(axis=-1), 1.0, atol=1e-9)


def test_element_wrong_row_count_rejected(rng):
    bad = Tensor(rng.normal(size=(4, 8)))
    hist, cand, w = elem_inputs(rng)
    with pytest.raises(ShapeError):
        element_attend(bad, cand, *w)


def test_element_zero_weights_uniform(rng):
    hist = Tensor(rng.normal(size=(5, 8)))
    cand = Tensor(rng.normal(size=(5, 8)))
    zeros = [Tensor(np.zeros((16, 8))) for _ in range(3)]
    _, gamma = element_attend(hist, cand, *zeros)
    np.testing.assert_allclose(gamma.detach(), 0.2, atol=1e-12)


def test_element_permutation_equivariance(rng):
    hist, cand, w = elem_inputs(rng)
    perm = np.array([3, 0, 4, 1, 2])
    a1, g1 = element_attend(hist, cand, *w)
    a2, g2 = element_attend(
        Tensor(hist.detach()[perm]), Tensor(cand.detach()[perm]), *w
    )
    np.testing.assert_allclose(a2.detach(), a1.detach()[perm], atol=1e-9)
    np.testing.assert_allclose(g2.detach(), g1.detach()[np.ix_(perm, perm)], atol=1e-9)


def test_element_dropout_contract(rng):
    hist, cand, w = elem_inputs(rng)
    with pytest.raises(ValueError):
        element_attend(hist, cand, *w, dropout_rate=0.5, training=True, rng=None)
    # gamma returned for inspection is pre-dropout: rows still sum to 1
    _, gamma = element_attend(
        hist, cand, *w, dropout_rate=0.5, training=True, rng=np.random.default_rng(0)
    )
    np.testing.assert_allclose(gamma.detach().sum(axis=-1), 1.0, atol=1e-9)


def test_pool_elements_mean(rng):
    attended = Tensor(rng.normal(size=(5, 3)))
    np.testing.assert_allclose(
        pool_elements(attended).detach(), attended.detach().mean(axis=0), atol=1e-12
    )


def test_element_grad_check(rng):
    d = 8
    hist = Tensor(rng.normal(size=(5, d)))
    cand = Tensor(rng.normal(size=(5, d)))
    store = ParamStore()
    for name in ("w4", "w5", "w6"):
        store.add(name, rng.normal(size=(2 * d, d)) * 0.3)

    def f(s):
        attended, _ = element_attend(hist, cand, s["w4"], s["w5"], s["w6"])
        return T.sum_all(pool_elements(attended))

    assert grad_check(f, store) < 1e-4
