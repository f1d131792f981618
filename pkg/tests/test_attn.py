import math

import numpy as np
import pytest

from fan.adcore import AdadeltaState, ShapeError, Tensor, adadelta_step, backward, check_gradients, no_grad
from fan.attn import (
    Alphabet,
    AttnConfig,
    attend,
    attention_loss,
    build_attn,
    greedy_decode,
    lexicon_decode,
    score_words,
)

K = 37


@pytest.fixture
def params():
    return build_attn(6, K, AttnConfig(state_size=5, attn_size=4), rng_seed=7)


@pytest.fixture
def H(rng):
    return Tensor(rng.normal(size=(5, 6)))


class TestAlphabet:
    def test_layout(self):
        a = Alphabet()
        assert a.size == 37 and a.eos == 36
        assert a.encode("aZ9") == [0, 25, 35]
        assert a.decode([2, 36, 1]) == "cb"

    def test_outside(self):
        with pytest.raises(ValueError):
            Alphabet().encode("a-b")
        assert "ab-" not in Alphabet()


class TestAttend:
    def test_identical_features_uniform(self, params):
        H = Tensor(np.tile(np.arange(6.0), (4, 1)))
        alpha, g = attend(Tensor(np.ones(5)), H, params)
        np.testing.assert_allclose(alpha.data, 0.25, atol=1e-15)
        np.testing.assert_allclose(g.data, np.arange(6.0), atol=1e-12)

    def test_zero_v_uniform(self, params, H):
        params["att.v"].data[...] = 0.0
        alpha, _ = attend(Tensor(np.ones(5)), H, params)
        np.testing.assert_allclose(alpha.data, 0.2, atol=1e-15)

    def test_glimpse_in_convex_hull(self, params, H, rng):
        for _ in range(20):
            alpha, g = attend(Tensor(rng.normal(size=5)), H, params)
            assert abs(alpha.data.sum() - 1) < 1e-12
            assert np.all(g.data >= H.data.min(axis=0) - 1e-12)
            assert np.all(g.data <= H.data.max(axis=0) + 1e-12)

    def test_empty_sequence(self, params):
        with pytest.raises(ShapeError):
            attend(Tensor(np.zeros(5)), Tensor(np.zeros((0, 6))), params)


class TestLoss:
    def test_zero_generate_gives_log_k_per_step(self, params, H):
        params["gen.W"].data[...] = 0.0
        params["gen.b"].data[...] = 0.0
        loss, traces = attention_loss(H, [1, 2, 3, 36], params)
        assert len(traces) == 4
        assert math.isclose(loss.item(), 4 * math.log(K), rel_tol=1e-13)

    def test_target_must_end_with_eos(self, params, H):
        with pytest.raises(ValueError):
            attention_loss(H, [1, 2], params)
        with pytest.raises(ValueError):
            attention_loss(H, [1, 36, 2, 36], params)

    def test_batch_matches_single(self, params, rng):
        Hb = Tensor(rng.normal(size=(2, 5, 6)))
        tg = [[1, 36], [4, 5, 6, 36]]
        lb, _ = attention_loss(Hb, tg, params)
        for i in range(2):
            ls, _ = attention_loss(Tensor(Hb.data[i]), tg[i], params)
            assert math.isclose(lb.data[i], ls.item(), rel_tol=1e-12)

    def test_memorizes_one_sample(self, params, H):
        target = [7, 8, 9, 36]
        state = AdadeltaState()
        first = None
        for _ in range(50):
            loss, _ = attention_loss(H, target, params)
            first = loss.item() if first is None else first
            backward(loss, params=params.values())
            adadelta_step(params, state)
        with no_grad():
            last = attention_loss(H, target, params)[0].item()
        assert last < first

    def test_full_gradient(self, rng):
        p = build_attn(6, 5, AttnConfig(state_size=8, attn_size=8), rng_seed=2)
        H = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        err = check_gradients(lambda: attention_loss(H, [0, 3, 1, 4], p)[0], list(p.values()) + [H])
        assert err < 1e-4


class TestDecoding:
    def test_greedy_max_len_one(self, params, H):
        assert len(greedy_decode(H, params, max_len=1)) <= 1

    def test_greedy_matches_argmax_of_teacher_forced(self, params, H):
        ids = greedy_decode(H, params, max_len=6)
        _, traces = attention_loss(H, ids + [36], params)
        assert [int(t.logits.data.argmax()) for t in traces[: len(ids)]] == ids

    def test_lexicon_singleton(self, params, H):
        assert lexicon_decode(H, params, ["hello"], Alphabet()) == "hello"

    def test_lexicon_skips_bad_words(self, params, H):
        assert lexicon_decode(H, params, ["a-b", "ok"], Alphabet()) == "ok"
        with pytest.raises(ValueError):
            lexicon_decode(H, params, [], Alphabet())

    def test_score_is_negative_loss(self, params, H):
        a = Alphabet()
        words = ["abc", "q", "zz9"]
        s = score_words(H, params, [a.encode(w) for w in words])
        for w, v in zip(words, s):
            assert math.isclose(v, -attention_loss(H, a.encode(w) + [a.eos], params)[0].item(), rel_tol=1e-12)
        assert lexicon_decode(H, params, words, a) == words[int(np.argmax(s))]
