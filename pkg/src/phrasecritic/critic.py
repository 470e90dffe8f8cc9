"""The phrase critic: an LSTM over per-phrase grounding vectors followed
by a two-layer regressor, trained with a pairwise hinge loss against
attribute-flipped negatives.

Each LSTM step sees ``[mean word embedding; region features; raw score]``.
Words are embedded through a hashed bucket table so no vocabulary file is
needed.
"""

import functools
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import (CheckpointIncompatibleError, FormatError, InvalidArgumentError,
                     NotFlippableError, NumericError)
from .grounding import ground_all, truth_phrases
from .negatives import FlipPolicy, make_negative, make_rng, sample_mismatch

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PARAM_NAMES = ("embedding", "lstm.W", "lstm.b", "nn.W1", "nn.b1", "nn.W2", "nn.b2")


@dataclass(frozen=True)
class CriticDims:
    d_w: int = 32
    d_r: int = 64
    d_h: int = 64
    d_hidden: int = 32
    buckets: int = 4096

    def __post_init__(self):
        for k, v in asdict(self).items():
            if int(v) < 1:
                raise InvalidArgumentError(f"dimension {k} must be >= 1, got {v}")

    @property
    def d_in(self):
        return self.d_w + self.d_r + 1

    def shapes(self):
        return {
            "embedding": (self.buckets, self.d_w),
            "lstm.W": (4 * self.d_h, self.d_in + self.d_h),
            "lstm.b": (4 * self.d_h,),
            "nn.W1": (self.d_hidden, self.d_h),
            "nn.b1": (self.d_hidden,),
            "nn.W2": (1, self.d_hidden),
            "nn.b2": (1,),
        }


@dataclass
class CriticModel:
    dims: CriticDims
    params: dict
    seed: int = 0

    def __post_init__(self):
        shapes = self.dims.shapes()
        if set(self.params) != set(shapes):
            raise InvalidArgumentError(f"parameter names {sorted(self.params)} != {sorted(shapes)}")
        for k, shape in shapes.items():
            a = np.asarray(self.params[k], dtype=np.float64)
            if a.shape != shape:
                raise InvalidArgumentError(f"parameter {k} has shape {a.shape}, expected {shape}")
            self.params[k] = a

    @property
    def lstm(self):
        return T.LstmCellParams(self.params["lstm.W"], self.params["lstm.b"])

    @property
    def regressor(self):
        p = self.params
        return T.TwoLayerParams(p["nn.W1"], p["nn.b1"], p["nn.W2"], p["nn.b2"])

    def copy(self):
        return CriticModel(self.dims, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def init_model(dims=CriticDims(), seed=0):
    rng = make_rng([seed, 0])
    shapes = dims.shapes()
    params = {
        "embedding": rng.uniform(-0.08, 0.08, shapes["embedding"]),
        "lstm.W": rng.uniform(-0.08, 0.08, shapes["lstm.W"]),
        "lstm.b": rng.uniform(-0.08, 0.08, shapes["lstm.b"]),
    }
    lim1 = math.sqrt(6.0 / (dims.d_h + dims.d_hidden))
    lim2 = math.sqrt(6.0 / (dims.d_hidden + 1))
    params["nn.W1"] = rng.uniform(-lim1, lim1, shapes["nn.W1"])
    params["nn.b1"] = np.zeros(shapes["nn.b1"])
    params["nn.W2"] = rng.uniform(-lim2, lim2, shapes["nn.W2"])
    params["nn.b2"] = np.zeros(shapes["nn.b2"])
    return CriticModel(dims, params, seed)


def zero_model(dims=CriticDims()):
    return CriticModel(dims, {k: np.zeros(s) for k, s in dims.shapes().items()})


@functools.lru_cache(maxsize=65536)
def word_bucket(word, buckets):
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


def phrase_rows(model, phrase):
    return [word_bucket(w, model.dims.buckets) for w in phrase.tokens]


def embed_phrase(model, phrase):
    return model.params["embedding"][phrase_rows(model, phrase)].mean(axis=0)


def encode_step_input(model, g):
    if g.features.shape[0] != model.dims.d_r:
        raise InvalidArgumentError(
            f"grounding features have length {g.features.shape[0]}, model expects {model.dims.d_r}")
    return np.concatenate([embed_phrase(model, g.phrase), g.features, [g.score]])


def critic_score(model, groundings):
    if not groundings:
        raise InvalidArgumentError("critic_score needs at least one grounding")
    lstm = model.lstm
    h = np.zeros(model.dims.d_h)
    c = np.zeros(model.dims.d_h)
    for g in groundings:
        h, c = T.lstm_cell_forward(lstm, encode_step_input(model, g), h, c)
    return T.two_layer_forward(model.regressor, h)


def _score_on_tape(tape, nodes, model, groundings):
    if not groundings:
        raise InvalidArgumentError("critic_score needs at least one grounding")
    d_h = model.dims.d_h
    h = tape.constant(np.zeros(d_h))
    c = tape.constant(np.zeros(d_h))
    for g in groundings:
        if g.features.shape[0] != model.dims.d_r:
            raise InvalidArgumentError(
                f"grounding features have length {g.features.shape[0]}, model expects {model.dims.d_r}")
        emb = T.t_mean_rows(tape, nodes["embedding"], phrase_rows(model, g.phrase))
        x = T.t_concat(tape, [emb, tape.constant(g.features), tape.constant([g.score])])
        h, c = T.t_lstm_cell(tape, nodes["lstm.W"], nodes["lstm.b"], x, h, c)
    return T.t_two_layer(tape, nodes["nn.W1"], nodes["nn.b1"], nodes["nn.W2"], nodes["nn.b2"], h)


@dataclass(frozen=True)
class TrainPair:
    image_id: str
    positive: tuple
    negative: tuple

    def __post_init__(self):
        if not self.positive or not self.negative:
            raise InvalidArgumentError("both sides of a training pair must be nonempty")


def train_pair_loss(model, pair, margin=1.0):
    return T.margin_ranking_loss(critic_score(model, pair.positive),
                                 critic_score(model, pair.negative), margin)


def pair_loss_and_grad(model, pair, margin=1.0, grads=None):
    """Hinge loss of one pair and its gradient w.r.t. every parameter."""
    tape = T.Tape()
    nodes = {k: tape.param(k, v) for k, v in model.params.items()}
    s_pos = _score_on_tape(tape, nodes, model, pair.positive)
    s_neg = _score_on_tape(tape, nodes, model, pair.negative)
    loss = T.t_margin_loss(tape, s_pos, s_neg, margin)
    if grads is None:
        grads = T.GradStore(model.params)
    T.backward(tape, loss, grads)
    return float(loss.value[0]), grads


def pairwise_accuracy(model, pairs):
    if not pairs:
        raise InvalidArgumentError("pairwise_accuracy needs at least one pair")
    wins = sum(critic_score(model, p.positive) > critic_score(model, p.negative) for p in pairs)
    return wins / len(pairs)


@dataclass
class TrainConfig:
    margin: float = 1.0
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    negatives_per_image: int = 5
    flip_policy: FlipPolicy = field(default_factory=FlipPolicy)
    patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.margin < 0:
            raise InvalidArgumentError(f"margin must be >= 0, got {self.margin}")
        if self.epochs < 1:
            raise InvalidArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise InvalidArgumentError(f"learning rate must be >= 0, got {self.lr}")
        if self.negatives_per_image < 1:
            raise InvalidArgumentError("negatives_per_image must be >= 1")
        if self.patience < 0:
            raise InvalidArgumentError("patience must be >= 0")


def make_pairs(images, grounder, lex, count, policy, rng, truth=None):
    """``count`` positive/negative pairs per image, in image order.

    Positives ground the image's true phrases; negatives ground a flipped
    copy on the same image, or another image's phrases when nothing flips.
    """
    if truth is None:
        truth = {img.image_id: truth_phrases(img, lex) for img in images}
    pairs = []
    for img in images:
        pos_phrases = truth[img.image_id]
        positive = tuple(ground_all(grounder, img.image_id, pos_phrases))
        for _ in range(count):
            try:
                neg_phrases = make_negative(pos_phrases, lex, policy, rng, img.attribute_set)
            except NotFlippableError:
                neg_phrases = sample_mismatch(truth, img.image_id, rng)
            negative = tuple(ground_all(grounder, img.image_id, neg_phrases))
            pairs.append(TrainPair(img.image_id, positive, negative))
    return pairs


def train(model, images, grounder, lex, config=TrainConfig()):
    """Pair-at-a-time Adam training. Returns (new model, per-epoch mean loss)."""
    if not images:
        raise InvalidArgumentError("cannot train on an empty dataset")
    model = model.copy()
    truth = {img.image_id: truth_phrases(img, lex) for img in images}
    for img in images:
        if not truth[img.image_id]:
            raise InvalidArgumentError(f"image {img.image_id!r} has no ground-truth phrases")
    rng = make_rng([config.seed, 1])
    state = T.AdamState(lr=config.lr)
    grads = T.GradStore(model.params)
    history = []
    best = math.inf
    stale = 0
    for epoch in range(config.epochs):
        order = [images[int(k)] for k in rng.permutation(len(images))]
        pairs = make_pairs(order, grounder, lex, config.negatives_per_image,
                           config.flip_policy, rng, truth)
        total = 0.0
        for pair in pairs:
            loss, grads = pair_loss_and_grad(model, pair, config.margin, grads)
            total += loss
            model.params, state = T.adam_step(state, model.params, grads)
        if not model.is_finite() or not math.isfinite(total):
            raise NumericError(f"non-finite parameters or loss in epoch {epoch + 1}")
        mean = total / len(pairs)
        history.append(mean)
        log.info("epoch %d mean loss %.6f", epoch + 1, mean)
        if config.patience:
            if mean < best:
                best, stale = mean, 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return model, history


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_to_dict(model):
    return {
        "format_version": CHECKPOINT_VERSION,
        "dims": asdict(model.dims),
        "seed": model.seed,
        "params": [
            {"name": k, "shape": list(model.params[k].shape),
             "values": model.params[k].ravel().tolist()}
            for k in PARAM_NAMES
        ],
    }


def checkpoint_from_dict(d, expect_dims=None):
    if d.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointIncompatibleError(
            f"checkpoint format {d.get('format_version')!r}, expected {CHECKPOINT_VERSION}")
    dims = CriticDims(**d["dims"])
    if expect_dims is not None and dims != expect_dims:
        raise CheckpointIncompatibleError(f"checkpoint dims {dims} do not match configured {expect_dims}")
    shapes = dims.shapes()
    params = {}
    for entry in d["params"]:
        name = entry["name"]
        shape = tuple(entry["shape"])
        if shapes.get(name) != shape:
            raise CheckpointIncompatibleError(f"parameter {name!r} has shape {shape}, dims imply {shapes.get(name)}")
        values = np.array(entry["values"], dtype=np.float64)
        if values.size != math.prod(shape):
            raise CheckpointIncompatibleError(f"parameter {name!r} has {values.size} values for shape {shape}")
        params[name] = values.reshape(shape)
    if set(params) != set(shapes):
        raise CheckpointIncompatibleError(f"checkpoint parameters {sorted(params)} != {sorted(shapes)}")
    return CriticModel(dims, params, int(d.get("seed", 0)))


def save_checkpoint(model, path):
    text = json.dumps(checkpoint_to_dict(model), sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path, expect_dims=None):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, path, e.lineno) from e
    return checkpoint_from_dict(d, expect_dims)
