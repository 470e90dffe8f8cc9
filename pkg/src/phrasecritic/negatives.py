"""Negative explanations for ranking-loss training.

Random streams are numpy ``Generator(PCG64(seed))``; identical seeds give
identical streams on every platform numpy supports.
"""

from dataclasses import dataclass

import numpy as np

from .chunker import AttributePhrase
from .errors import InsufficientDataError, InvalidArgumentError, NotFlippableError


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class FlipPolicy:
    flip_probability: float = 0.5
    min_flips: int = 1
    exclude_image_attributes: bool = False

    def __post_init__(self):
        if not 0.0 < self.flip_probability <= 1.0:
            raise InvalidArgumentError(f"flip_probability must be in (0, 1], got {self.flip_probability}")
        if self.min_flips < 1:
            raise InvalidArgumentError(f"min_flips must be >= 1, got {self.min_flips}")


def _replacements(word, category, noun, lex, banned):
    return [w for w in sorted(lex.words(category))
            if w != word and (w, noun) not in banned]


def _with_attribute(phrase, pos, word):
    attrs = list(phrase.attributes)
    attrs[pos] = (word, attrs[pos][1])
    return AttributePhrase(tuple(attrs), phrase.head_noun, phrase.span)


def flip_phrase(phrase, lex, rng):
    """Replace exactly one color/size attribute with a different word of
    the same category."""
    positions = [k for k in phrase.flippable_positions()
                 if _replacements(*phrase.attributes[k], phrase.head_noun, lex, ())]
    if not positions:
        raise NotFlippableError(f"no flippable attribute in {phrase.text!r}")
    pos = positions[int(rng.integers(len(positions)))]
    word, cat = phrase.attributes[pos]
    choices = _replacements(word, cat, phrase.head_noun, lex, ())
    return _with_attribute(phrase, pos, choices[int(rng.integers(len(choices)))])


def make_negative(phrases, lex, policy, rng, image_attributes=None):
    banned = set(image_attributes or ()) if policy.exclude_image_attributes else set()
    slots = []
    for i, p in enumerate(phrases):
        for k in p.flippable_positions():
            word, cat = p.attributes[k]
            choices = _replacements(word, cat, p.head_noun, lex, banned)
            if choices:
                slots.append((i, k, choices))
    if not slots:
        raise NotFlippableError("no color/size attribute can be flipped")
    if len(slots) < policy.min_flips:
        raise NotFlippableError(f"only {len(slots)} flippable attributes, need {policy.min_flips}")

    chosen = [j for j in range(len(slots)) if rng.random() < policy.flip_probability]
    if len(chosen) < policy.min_flips:
        rest = [j for j in range(len(slots)) if j not in chosen]
        extra = rng.choice(len(rest), size=policy.min_flips - len(chosen), replace=False)
        chosen = sorted(chosen + [rest[int(e)] for e in extra])

    out = list(phrases)
    for j in chosen:
        i, k, choices = slots[j]
        out[i] = _with_attribute(out[i], k, choices[int(rng.integers(len(choices)))])
    return out


def sample_mismatch(dataset, image_id, rng):
    """Ground-truth phrases of a uniformly chosen different image."""
    others = sorted(k for k in dataset if k != image_id)
    if not others:
        raise InsufficientDataError("mismatch sampling needs at least two images")
    return list(dataset[others[int(rng.integers(len(others)))]])
