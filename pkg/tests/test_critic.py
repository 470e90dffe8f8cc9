import numpy as np
import pytest

from phrasecritic import critic as C
from phrasecritic.chunker import phrase_from_text
from phrasecritic.errors import CheckpointIncompatibleError, InvalidArgumentError
from phrasecritic.grounding import BoundingBox, Grounding, ImageRecord, SyntheticConfig, SyntheticGrounder
from phrasecritic.negatives import FlipPolicy, make_rng
from phrasecritic.synth import BenchmarkConfig, generate

import oracles
from helpers import SMALL, gradient_mismatches, random_critic_case, random_grounding

TINY = C.CriticDims(d_w=4, d_r=8, d_h=8, d_hidden=6, buckets=64)


def grounding(lex, text, feats, score):
    return Grounding(phrase_from_text(text, lex), BoundingBox(0, 0, 1, 1), feats, score)


def test_embed_phrase(lex):
    dims = C.CriticDims(d_w=3, d_r=2, d_h=2, d_hidden=2, buckets=32)
    assert not C.embed_phrase(C.zero_model(dims), phrase_from_text("red beak", lex)).any()
    m = C.init_model(dims, seed=1)
    E = m.params["embedding"]
    red, beak = C.word_bucket("red", 32), C.word_bucket("beak", 32)
    np.testing.assert_array_equal(C.embed_phrase(m, phrase_from_text("red beak", lex)), (E[red] + E[beak]) / 2)
    from phrasecritic.chunker import AttributePhrase
    single = AttributePhrase((), "beak", (0, 1))
    np.testing.assert_array_equal(C.embed_phrase(m, single), E[beak])


def test_encode_step_input(lex):
    dims = C.CriticDims(d_w=2, d_r=2, d_h=2, d_hidden=2, buckets=8)
    m = C.zero_model(dims)
    g = grounding(lex, "red beak", [1.0, 2.0], 0.5)
    assert C.encode_step_input(m, g).tolist() == [0, 0, 1, 2, 0.5]
    m = C.init_model(dims, 0)
    a = C.encode_step_input(m, g)
    b = C.encode_step_input(m, grounding(lex, "red beak", [1.0, 2.0], -3.0))
    assert len(a) == dims.d_w + dims.d_r + 1
    assert np.array_equal(a[:-1], b[:-1]) and a[-1] != b[-1]
    with pytest.raises(InvalidArgumentError):
        C.encode_step_input(m, grounding(lex, "red beak", [1.0, 2.0, 3.0], 0.5))


def test_critic_score_simple_models(lex):
    g = [grounding(lex, "red beak", np.ones(8), 0.8), grounding(lex, "long neck", -np.ones(8), 0.2)]
    assert C.critic_score(C.zero_model(TINY), g) == 0.0
    m = C.init_model(TINY, 0)
    m.params["lstm.W"][:] = 0
    m.params["lstm.b"][:] = 0
    m.params["nn.W2"][:] = 0
    m.params["nn.b2"][:] = 3.0
    assert C.critic_score(m, g) == 3.0
    with pytest.raises(InvalidArgumentError):
        C.critic_score(m, [])


@pytest.mark.parametrize("seed", range(10))
def test_critic_score_matches_straight_line_reference(seed):
    rng = np.random.default_rng(seed)
    model = C.CriticModel(SMALL, {k: rng.normal(0, 0.5, s) for k, s in SMALL.shapes().items()})
    gs = [random_grounding(rng, SMALL.d_r) for _ in range(int(rng.integers(1, 5)))]
    p = {k: v.tolist() for k, v in model.params.items()}
    h = [0.0] * SMALL.d_h
    c = [0.0] * SMALL.d_h
    for g in gs:
        rows = [C.word_bucket(w, SMALL.buckets) for w in g.phrase.tokens]
        emb = [sum(p["embedding"][r][k] for r in rows) / len(rows) for k in range(SMALL.d_w)]
        x = emb + g.features.tolist() + [g.score]
        h, c = oracles.lstm_list(p["lstm.W"], p["lstm.b"], x, h, c)
    expected = oracles.two_layer_list(p["nn.W1"], p["nn.b1"], p["nn.W2"], p["nn.b2"], h)
    assert C.critic_score(model, gs) == pytest.approx(expected, abs=1e-12)


def test_pair_loss_examples(lex):
    g = (grounding(lex, "red beak", np.ones(8), 0.8),)
    pair = C.TrainPair("i", g, g)
    assert C.train_pair_loss(C.zero_model(TINY), pair, 1.0) == 1.0
    assert C.train_pair_loss(C.zero_model(TINY), pair, 2.5) == 2.5
    with pytest.raises(InvalidArgumentError):
        C.TrainPair("i", (), g)


@pytest.mark.parametrize("seed", range(5))
def test_pair_loss_gradient(seed):
    model, pair, margin = random_critic_case(seed)
    assert gradient_mismatches(model, pair, margin) == []


def test_inactive_hinge_gives_zero_gradient():
    model, pair, _ = random_critic_case(0)
    gap = C.critic_score(model, pair.positive) - C.critic_score(model, pair.negative)
    loss, grads = C.pair_loss_and_grad(model, pair.__class__("img", pair.negative, pair.positive)
                                       if gap < 0 else pair, margin=0.0)
    assert loss == 0.0
    assert all(not g.any() for _, g in grads.items())


def test_pairwise_accuracy(lex):
    g = (grounding(lex, "red beak", np.ones(8), 0.8),)
    assert C.pairwise_accuracy(C.zero_model(TINY), [C.TrainPair("i", g, g)]) == 0.0
    m = C.zero_model(TINY)
    m.params["nn.W2"][:] = 1.0
    m.params["nn.W1"][:] = 1.0
    m.params["lstm.W"][:, -TINY.d_h - 1] = 5.0  # hidden state follows the score input
    hi = (grounding(lex, "red beak", np.zeros(8), 1.0),)
    lo = (grounding(lex, "red beak", np.zeros(8), 0.0),)
    assert C.critic_score(m, hi) > C.critic_score(m, lo)
    assert C.pairwise_accuracy(m, [C.TrainPair("i", hi, lo)]) == 1.0
    with pytest.raises(InvalidArgumentError):
        C.pairwise_accuracy(m, [])


@pytest.fixture(scope="module")
def tiny_bench(lex):
    bench = generate(lex, BenchmarkConfig(seed=3, n_train=8, n_test=4))
    grounder = SyntheticGrounder(bench.train_images + bench.test_images, SyntheticConfig(d_r=TINY.d_r))
    return bench, grounder


def test_train_deterministic(tiny_bench, lex):
    bench, grounder = tiny_bench
    cfg = C.TrainConfig(epochs=3, lr=1e-2, seed=11, negatives_per_image=2)
    m1, h1 = C.train(C.init_model(TINY, 11), bench.train_images, grounder, lex, cfg)
    m2, h2 = C.train(C.init_model(TINY, 11), bench.train_images, grounder, lex, cfg)
    assert h1 == h2
    for k in m1.params:
        assert m1.params[k].tobytes() == m2.params[k].tobytes()
    assert h1[-1] < h1[0]


def test_train_zero_lr_is_identity(tiny_bench, lex):
    bench, grounder = tiny_bench
    m0 = C.init_model(TINY, 2)
    m1, hist = C.train(m0, bench.train_images, grounder, lex, C.TrainConfig(epochs=3, lr=0.0, seed=2))
    for k in m0.params:
        assert np.array_equal(m0.params[k], m1.params[k])
    assert len(hist) == 3


def test_train_learns_separable_data(tiny_bench, lex):
    bench, grounder = tiny_bench
    cfg = C.TrainConfig(epochs=15, lr=1e-2, seed=0, negatives_per_image=3)
    m, hist = C.train(C.init_model(TINY, 0), bench.train_images, grounder, lex, cfg)
    pairs = C.make_pairs(bench.test_images, grounder, lex, 5, FlipPolicy(), make_rng(5))
    assert C.pairwise_accuracy(m, pairs) >= 0.9
    assert hist[-1] < 0.5 * hist[0]


def test_train_errors_and_fallback(tiny_bench, lex):
    bench, grounder = tiny_bench
    with pytest.raises(InvalidArgumentError):
        C.train(C.init_model(TINY), [], grounder, lex)
    for bad in ({"epochs": 0}, {"margin": -1.0}, {"lr": -1.0}):
        with pytest.raises(InvalidArgumentError):
            C.TrainConfig(**bad)
    # an image with only unflippable attributes borrows another image's phrases
    odd = [ImageRecord("a", 50, 50, (("pointed", "beak"),)), ImageRecord("b", 50, 50, (("red", "eye"),))]
    g = SyntheticGrounder(odd, SyntheticConfig(d_r=TINY.d_r))
    pairs = C.make_pairs(odd, g, lex, 2, FlipPolicy(), make_rng(0))
    assert [p.negative[0].phrase.text for p in pairs[:2]] == ["red eye", "red eye"]


def test_early_stopping(tiny_bench, lex):
    bench, grounder = tiny_bench
    cfg = C.TrainConfig(epochs=40, lr=0.0, seed=0, patience=2)
    _, hist = C.train(C.init_model(TINY), bench.train_images, grounder, lex, cfg)
    assert len(hist) < 40


def test_checkpoint_roundtrip(tmp_path):
    m = C.init_model(TINY, 4)
    path = tmp_path / "ck.json"
    C.save_checkpoint(m, path)
    back = C.load_checkpoint(path, expect_dims=TINY)
    assert back.dims == m.dims and back.seed == 4
    for k in m.params:
        assert back.params[k].tobytes() == m.params[k].tobytes()
    first = path.read_bytes()
    C.save_checkpoint(back, path)
    assert path.read_bytes() == first


def test_checkpoint_rejections(tmp_path):
    d = C.checkpoint_to_dict(C.init_model(TINY, 0))
    with pytest.raises(CheckpointIncompatibleError):
        C.checkpoint_from_dict(dict(d, format_version=99))
    with pytest.raises(CheckpointIncompatibleError):
        C.checkpoint_from_dict(d, expect_dims=SMALL)
    bad = dict(d, params=[dict(p, shape=[1, 1]) if p["name"] == "nn.b2" else p for p in d["params"]])
    with pytest.raises(CheckpointIncompatibleError):
        C.checkpoint_from_dict(bad)
