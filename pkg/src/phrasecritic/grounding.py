"""Phrase groundings: a phrase, its image box, region features and the
grounder's raw confidence.

Two grounders share one interface (``ground`` and ``feature_dim``): a
file-backed one that replays precomputed rows, and a deterministic
synthetic one used for closed-loop experiments.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .chunker import AttributePhrase, chunk_phrases, default_lexicon, phrase_from_text, tokenize
from .errors import FormatError, InvalidArgumentError, MissingGroundingError
from .jsonl import read_jsonl, require, write_jsonl


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or not (self.w > 0 and self.h > 0):
            raise InvalidArgumentError(f"invalid box {self.as_list()}")

    def as_list(self):
        return [self.x, self.y, self.w, self.h]

    def inside(self, width, height):
        return self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True, eq=False)
class Grounding:
    phrase: AttributePhrase
    box: BoundingBox
    features: np.ndarray
    score: float

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1:
            raise InvalidArgumentError("features must be a vector")
        if not math.isfinite(self.score):
            raise InvalidArgumentError(f"grounding score must be finite, got {self.score}")
        object.__setattr__(self, "features", feats)

    def __eq__(self, other):
        if not isinstance(other, Grounding):
            return NotImplemented
        return (self.phrase == other.phrase and self.box == other.box
                and self.score == other.score
                and np.array_equal(self.features, other.features))

    __hash__ = None


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    true_attributes: tuple = ()  # ordered, unique ((attr, noun), ...)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError(f"image {self.image_id!r} has non-positive size")
        pairs = tuple((str(a), str(n)) for a, n in self.true_attributes)
        if len(set(pairs)) != len(pairs):
            raise InvalidArgumentError(f"image {self.image_id!r} repeats an attribute pair")
        object.__setattr__(self, "true_attributes", pairs)

    @property
    def attribute_set(self):
        return frozenset(self.true_attributes)

    def to_dict(self):
        return {
            "image_id": self.image_id,
            "width": self.width,
            "height": self.height,
            "attributes": [{"attr": a, "noun": n} for a, n in self.true_attributes],
        }


def truth_sentence(image):
    """Render an image's true attributes as one sentence, grouping
    attributes that share a noun in first-appearance order."""
    groups = {}
    for attr, noun in image.true_attributes:
        groups.setdefault(noun, []).append(attr)
    return " and ".join(f"a {' '.join(attrs)} {noun}" for noun, attrs in groups.items())


def truth_phrases(image, lex):
    return chunk_phrases(tokenize(truth_sentence(image)), lex)


def read_images(path):
    images = []
    seen = set()
    for lineno, rec in read_jsonl(path):
        require(rec, ("image_id", "width", "height", "attributes"), path, lineno)
        try:
            img = ImageRecord(
                str(rec["image_id"]), int(rec["width"]), int(rec["height"]),
                tuple((a["attr"], a["noun"]) for a in rec["attributes"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad image record: {e}", path, lineno) from e
        if img.image_id in seen:
            raise FormatError(f"duplicate image_id {img.image_id!r}", path, lineno)
        seen.add(img.image_id)
        images.append(img)
    return images


def write_images(path, images):
    write_jsonl(path, (img.to_dict() for img in images))


def phrase_key(phrase):
    """Join key: lowercase attribute words and noun separated by single spaces."""
    text = phrase.text if isinstance(phrase, AttributePhrase) else str(phrase)
    return " ".join(text.lower().split())


class Grounder:
    def ground(self, image_id, phrase):
        raise NotImplementedError

    def feature_dim(self):
        raise NotImplementedError


class FileGrounder(Grounder):
    """Replays precomputed groundings keyed by (image_id, phrase text)."""

    def __init__(self, rows, dim, lexicon=None):
        self.rows = rows
        self.dim = dim
        self.lexicon = lexicon

    def feature_dim(self):
        return self.dim

    def lookup(self, image_id, text):
        try:
            return self.rows[(image_id, phrase_key(text))]
        except KeyError:
            raise MissingGroundingError(image_id, phrase_key(text)) from None

    def ground(self, image_id, phrase):
        box, score, feats = self.lookup(image_id, phrase)
        if not isinstance(phrase, AttributePhrase):
            phrase = phrase_from_text(phrase_key(phrase), self.lexicon or default_lexicon())
        return Grounding(phrase, box, feats.copy(), score)


def file_grounder_load(path, lexicon=None):
    rows = {}
    dim = None
    for lineno, rec in read_jsonl(path):
        require(rec, ("image_id", "phrase", "box", "score", "features"), path, lineno)
        try:
            box = BoundingBox(*(float(v) for v in rec["box"]))
            feats = np.array(rec["features"], dtype=np.float64)
            score = float(rec["score"])
        except (TypeError, ValueError, InvalidArgumentError) as e:
            raise FormatError(f"bad grounding record: {e}", path, lineno) from e
        if feats.ndim != 1 or feats.size == 0:
            raise FormatError("features must be a nonempty list of reals", path, lineno)
        if dim is None:
            dim = feats.size
        elif feats.size != dim:
            raise FormatError(f"feature dimension {feats.size} differs from {dim}", path, lineno)
        rows[(str(rec["image_id"]), phrase_key(rec["phrase"]))] = (box, score, feats)
    return FileGrounder(rows, dim if dim is not None else 0, lexicon)


def grounding_record(image_id, g):
    return {
        "image_id": image_id,
        "phrase": g.phrase.text,
        "box": g.box.as_list(),
        "score": g.score,
        "features": g.features.tolist(),
    }


def write_groundings(path, records):
    """``records`` is an iterable of (image_id, Grounding)."""
    write_jsonl(path, (grounding_record(i, g) for i, g in records))


# ---------------------------------------------------------------------------
# synthetic grounder


@dataclass(frozen=True)
class SyntheticConfig:
    d_r: int = 64
    sigma: float = 0.0
    base_match: float = 0.8
    base_miss: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.d_r < 1:
            raise InvalidArgumentError("d_r must be >= 1")
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be >= 0")


def _stream(*parts):
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8"), digest_size=8).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def is_match(image, phrase):
    truth = image.attribute_set
    return all(pair in truth for pair in phrase.pairs)


def synthetic_ground(image, phrase, config=SyntheticConfig()):
    match = is_match(image, phrase)
    attrs = " ".join(phrase.attribute_words)
    feats = _stream("feat", config.seed, phrase.head_noun, attrs, match).standard_normal(config.d_r)
    feats /= np.linalg.norm(feats)
    text = phrase_key(phrase)
    noise = config.sigma * (2.0 * _stream("noise", config.seed, image.image_id, text).random() - 1.0)
    score = (config.base_match if match else config.base_miss) + noise
    u = _stream("box", config.seed, image.image_id, text).random(4)
    w = image.width * (0.1 + 0.4 * u[0])
    h = image.height * (0.1 + 0.4 * u[1])
    box = BoundingBox(float(u[2] * (image.width - w)), float(u[3] * (image.height - h)), float(w), float(h))
    return Grounding(phrase, box, feats, float(score))


class SyntheticGrounder(Grounder):
    def __init__(self, images, config=SyntheticConfig()):
        self.images = {img.image_id: img for img in images}
        self.config = config
        self._cache = {}

    def feature_dim(self):
        return self.config.d_r

    def ground(self, image_id, phrase):
        if image_id not in self.images:
            raise MissingGroundingError(image_id, phrase_key(phrase))
        key = (image_id, phrase.tokens)
        hit = self._cache.get(key)
        if hit is None:
            hit = synthetic_ground(self.images[image_id], phrase, self.config)
            self._cache[key] = hit
        if hit.phrase != phrase:
            return Grounding(phrase, hit.box, hit.features, hit.score)
        return hit


def ground_all(grounder, image_id, phrases):
    if not phrases:
        raise InvalidArgumentError("cannot ground an empty phrase list")
    return [grounder.ground(image_id, p) for p in phrases]
