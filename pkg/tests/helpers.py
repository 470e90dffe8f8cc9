import numpy as np

from phrasecritic import critic as C
from phrasecritic import tensor as T
from phrasecritic.chunker import AttributePhrase
from phrasecritic.grounding import BoundingBox, Grounding

VOCAB = [("red", "color"), ("black", "color"), ("long", "size"), ("pointed", "other")]
NOUNS = ["beak", "eye", "wing", "neck"]
SMALL = C.CriticDims(d_w=4, d_r=4, d_h=6, d_hidden=5, buckets=16)


def random_grounding(rng, d_r):
    k = int(rng.integers(1, 3))
    attrs = tuple(VOCAB[int(i)] for i in rng.integers(0, len(VOCAB), k))
    phrase = AttributePhrase(attrs, NOUNS[int(rng.integers(len(NOUNS)))], (0, k + 1))
    return Grounding(phrase, BoundingBox(0, 0, 1, 1), rng.normal(size=d_r), float(rng.normal()))


def random_critic_case(seed, dims=SMALL, max_len=4):
    """Random critic with nontrivial weights and a pair whose hinge is active."""
    rng = np.random.default_rng(seed)
    params = {k: rng.normal(0, 0.5, s) for k, s in dims.shapes().items()}
    model = C.CriticModel(dims, params)
    pos = tuple(random_grounding(rng, dims.d_r) for _ in range(int(rng.integers(1, max_len + 1))))
    neg = tuple(random_grounding(rng, dims.d_r) for _ in range(int(rng.integers(1, max_len + 1))))
    pair = C.TrainPair("img", pos, neg)
    gap = C.critic_score(model, pos) - C.critic_score(model, neg)
    margin = max(1.0, gap + 1.0)
    return model, pair, margin


def gradient_mismatches(model, pair, margin, h=1e-6, rel=1e-4, abs_=1e-7):
    """Names of parameters whose tape gradient disagrees with central differences."""
    _, grads = C.pair_loss_and_grad(model, pair, margin)
    bad = []
    for name, p in model.params.items():
        numeric = T.finite_diff_grad(lambda _: C.train_pair_loss(model, pair, margin), p, h)
        a = grads[name]
        tol = np.maximum(abs_, rel * np.maximum(np.abs(a), np.abs(numeric)))
        if not np.all(np.abs(a - numeric) <= tol):
            bad.append(name)
    return bad
