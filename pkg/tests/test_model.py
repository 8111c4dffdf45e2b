import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabr import model
from stabr.errors import VocabularyError
from stabr.gradcheck import check_gradients
from stabr.model import ModelConfig, TrainingExample
from stabr.numerics import Rng

from oracles import model_oracle

TOL = 1e-4


def tiny(arch, seed=0, n_songs=6, n_tags=5, scale=0.3, dropout=0.1):
    cfg = ModelConfig(arch, n_songs=n_songs, n_tags=n_tags, song_dim=3, tag_dim=2,
                      song_hidden=3, tag_hidden=2, bottleneck=4, dropout=dropout, m=4)
    p = model.init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    for v in p.tensors.values():
        v += rng.normal(0, scale, v.shape)
    return p


def random_example(rng, n_songs, n_tags, max_len=4):
    L = int(rng.integers(1, max_len + 1))
    prefix = tuple(int(s) for s in rng.integers(0, n_songs, L))
    tags = tuple(
        tuple(int(t) for t in rng.choice(n_tags, size=int(rng.integers(0, 3)), replace=False))
        for _ in prefix
    )
    return TrainingExample(prefix, tags, int(rng.integers(0, n_songs)))


EX = TrainingExample((1, 4, 2), ((0, 3), (), (1,)), 5)


@pytest.mark.parametrize("arch", ["sabr", "stabr"])
@pytest.mark.parametrize("mode", ["eval", "train"])
def test_probabilities_normalised(arch, mode):
    p = tiny(arch)
    lp, _ = model.forward(p, EX, mode, Rng(1))
    assert lp.shape == (6,)
    assert abs(np.exp(lp).sum() - 1.0) < 1e-9


def test_zero_output_layer_gives_uniform():
    p = tiny("stabr")
    p.tensors["W2"][:] = 0.0
    p.tensors["b2"][:] = 0.0
    lp, _ = model.forward(p, EX)
    np.testing.assert_allclose(np.exp(lp), np.full(6, 1 / 6), rtol=1e-14)


@pytest.mark.parametrize("arch", ["sabr", "stabr"])
def test_forward_matches_transcription_oracle(arch):
    p = tiny(arch, seed=3, n_songs=5)
    ex = TrainingExample((4, 1), ((0, 2), (3,)), 0)
    lp, _ = model.forward(p, ex)
    np.testing.assert_allclose(np.exp(lp), model_oracle(p, ex.prefix, ex.prefix_tags), rtol=1e-12)


def test_out_of_vocab_prefix():
    p = tiny("stabr")
    with pytest.raises(VocabularyError):
        model.forward(p, TrainingExample((6,), ((),), 0))
    with pytest.raises(VocabularyError):
        model.forward(p, TrainingExample((1,), ((5,),), 0))


def test_batch_equals_individual_forwards():
    p = tiny("stabr")
    rng = np.random.default_rng(0)
    exs = [random_example(rng, 6, 5) for _ in range(6)]
    lp, _ = model.forward_batch(p, [e.prefix for e in exs], [e.prefix_tags for e in exs])
    for row, ex in zip(lp, exs):
        np.testing.assert_allclose(row, model.forward(p, ex)[0], rtol=1e-13, atol=1e-15)


class TestLoss:
    def test_certain_target(self):
        lp = np.array([-np.inf, 0.0, -np.inf])
        assert model.loss(lp, 1) == 0.0

    def test_uniform(self):
        lp = np.log(np.full(4, 0.25))
        assert model.loss(lp, 2) == pytest.approx(1.3862944, abs=1e-7)
        assert model.loss(lp, 2) == pytest.approx(math.log(4), rel=1e-15)

    def test_matches_direct_softmax(self):
        p = tiny("sabr", seed=2)
        lp, cache = model.forward(p, EX)
        mid = np.maximum(cache["c_d1"][1], 0)
        logits = mid @ p.tensors["W2"].T + p.tensors["b2"]
        direct = -math.log(math.exp(logits[0, 5]) / np.exp(logits[0]).sum())
        assert model.loss(lp, 5) == pytest.approx(direct, rel=1e-12)

    def test_bad_target(self):
        with pytest.raises(VocabularyError):
            model.loss(np.zeros(3), 3)


class TestBackward:
    def test_output_bias_gradient_identity(self):
        p = tiny("stabr")
        lp, cache = model.forward(p, EX)
        g = model.backward(p, cache, EX.target)
        expected = np.exp(lp)
        expected[EX.target] -= 1.0
        np.testing.assert_allclose(g["b2"], expected, rtol=1e-13, atol=1e-16)

    def test_unused_embedding_columns_have_zero_gradient(self):
        p = tiny("stabr")
        _, cache = model.forward(p, EX)
        g = model.backward(p, cache, EX.target)
        for col in set(range(6)) - set(EX.prefix):
            assert np.all(g["E1"][:, col] == 0.0)
        for tag in set(range(5)) - {0, 1, 3}:
            assert np.all(g["E2"][:, tag] == 0.0)
        assert np.any(g["E1"][:, 1] != 0)

    @pytest.mark.parametrize("arch", ["sabr", "stabr"])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_differences(self, arch, seed):
        p = tiny(arch, seed=seed)
        rng = np.random.default_rng(100 + seed)
        exs = [random_example(rng, 6, 5) for _ in range(3)]
        _, grads = model.loss_and_grad(p, exs, Rng(seed))
        f = lambda: model.loss_and_grad(p, exs, Rng(seed))[0]
        errors = check_gradients(f, p.tensors, grads)
        assert max(errors.values()) < TOL, errors

    def test_taylor_first_order(self):
        p = tiny("stabr", seed=4)
        _, grads = model.loss_and_grad(p, [EX], None, mode="eval")
        before = model.loss_and_grad(p, [EX], None, mode="eval")[0]
        norm2 = sum(float(np.sum(g * g)) for g in grads.values())
        step = 1e-4
        for k, g in grads.items():
            p.tensors[k] -= step * g
        after = model.loss_and_grad(p, [EX], None, mode="eval")[0]
        predicted = step * norm2
        assert abs((before - after) - predicted) <= 0.1 * predicted


def test_sabr_equals_stabr_with_tag_branch_annihilated():
    stabr = tiny("stabr", seed=5)
    cfg = stabr.config
    sabr_cfg = ModelConfig("sabr", cfg.n_songs, cfg.n_tags, cfg.song_dim, cfg.tag_dim,
                           cfg.song_hidden, cfg.tag_hidden, bottleneck=cfg.bottleneck,
                           dropout=cfg.dropout, m=cfg.m)
    sabr = model.init_params(sabr_cfg, 0)
    for k in sabr.tensors:
        sabr.tensors[k] = stabr.tensors[k].copy()
    S = cfg.song_state
    sabr.tensors["W1"] = stabr.tensors["W1"][:, :S].copy()
    stabr.tensors["W1"][:, S:] = 0.0
    prefix = (0, 3, 2)
    a, _ = model.forward_batch(sabr, [prefix], None)
    b, _ = model.forward_batch(stabr, [prefix], [((), (), ())])
    np.testing.assert_allclose(a, b, rtol=1e-14)


class TestPredict:
    def test_full_ranking_is_permutation(self):
        p = tiny("stabr")
        ranked = model.predict_topk(p, [1, 2], [(0,), (1, 2)], 6)
        assert sorted(ranked) == list(range(6))

    def test_ties_break_by_index(self):
        p = tiny("sabr")
        p.tensors["W2"][:] = 0.0
        p.tensors["b2"][:] = 0.0
        assert model.predict_topk(p, [1, 2], None, 4) == [0, 1, 2, 3]

    def test_agrees_with_full_sort(self):
        p = tiny("stabr", seed=7)
        prefix, tags = [3, 0, 1], [(1,), (), (2, 4)]
        lp, _ = model.forward_batch(p, [prefix], [tags])
        oracle = sorted(range(6), key=lambda i: (-lp[0, i], i))[:3]
        assert model.predict_topk(p, prefix, tags, 3) == oracle

    @pytest.mark.parametrize("k", [0, 7])
    def test_k_out_of_range(self, k):
        with pytest.raises(ValueError):
            model.predict_topk(tiny("sabr"), [1], None, k)

    def test_window_truncates_to_m(self):
        p = tiny("sabr")
        long = [0, 1, 2, 3, 4, 5]
        assert model.predict_topk(p, long, None, 6) == model.predict_topk(p, long[-4:], None, 6)

    def test_repeatable(self):
        p = tiny("stabr")
        a = model.predict_topk(p, [1, 2], [(0,), ()], 3)
        assert all(model.predict_topk(p, [1, 2], [(0,), ()], 3) == a for _ in range(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(["train", "eval"]))
def test_simplex_property(seed, mode):
    p = tiny("stabr", seed=seed % 5, scale=2.0)
    ex = random_example(np.random.default_rng(seed), 6, 5)
    lp, _ = model.forward(p, ex, mode, Rng(seed))
    assert np.all(np.isfinite(lp))
    assert abs(np.exp(lp).sum() - 1.0) < 1e-9


def test_init_params_shapes_and_bias_zero():
    cfg = ModelConfig("stabr", n_songs=9, n_tags=4)
    p = model.init_params(cfg, 0)
    model.validate_params(p)
    assert p.tensors["W1"].shape == (50, 150)
    assert p.tensors["song_att.Wa"].shape == (50, 100)
    assert p.tensors["tag_att.Wa"].shape == (25, 50)
    assert np.all(p.tensors["b1"] == 0)
    limit = math.sqrt(6 / (50 + 150))
    assert np.abs(p.tensors["W1"]).max() <= limit


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ModelConfig("lstm", n_songs=3)
    with pytest.raises(ValueError):
        ModelConfig("stabr", n_songs=3, n_tags=0)
    with pytest.raises(ValueError):
        ModelConfig("sabr", n_songs=3, dropout=1.0)
