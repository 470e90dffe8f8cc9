"""Lexicon-driven attribute phrase chunking.

A phrase is a maximal run of attribute words followed directly by a head
noun, where a head noun is any token that is neither an attribute word nor
a stopword. Only attributive (pre-noun) attributes are extracted.
"""

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import FormatError, InvalidArgumentError

CATEGORIES = ("color", "size", "other")
FLIPPABLE = ("color", "size")

_PUNCT = re.compile(r"[.,;:!?\"'()]")


@dataclass(frozen=True)
class Lexicon:
    color: frozenset
    size: frozenset
    other_attributes: frozenset
    stopwords: frozenset

    def __post_init__(self):
        sets = {}
        for name in ("color", "size", "other_attributes", "stopwords"):
            words = frozenset(getattr(self, name))
            for w in words:
                if not w or w != w.lower() or any(ch.isspace() for ch in w):
                    raise InvalidArgumentError(f"bad lexicon entry {w!r} in {name}")
            object.__setattr__(self, name, words)
            sets[name] = words
        names = list(sets)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                both = sets[a] & sets[b]
                if both:
                    raise InvalidArgumentError(f"lexicon lists {sorted(both)} under both {a} and {b}")

    def category(self, word):
        """Attribute category of ``word`` or None."""
        if word in self.color:
            return "color"
        if word in self.size:
            return "size"
        if word in self.other_attributes:
            return "other"
        return None

    def words(self, category):
        return {"color": self.color, "size": self.size, "other": self.other_attributes}[category]

    def to_dict(self):
        return {
            "color": sorted(self.color),
            "other_attributes": sorted(self.other_attributes),
            "size": sorted(self.size),
            "stopwords": sorted(self.stopwords),
        }

    @classmethod
    def from_dict(cls, d):
        missing = {"color", "size", "other_attributes", "stopwords"} - set(d)
        if missing:
            raise FormatError(f"lexicon missing lists: {sorted(missing)}")
        return cls(*(frozenset(d[k]) for k in ("color", "size", "other_attributes", "stopwords")))


def dump_lexicon(lex, path):
    Path(path).write_text(json.dumps(lex.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_lexicon(path=None):
    """Load a lexicon file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("phrasecritic").joinpath("data/lexicon.json").read_text(encoding="utf-8")
        src = "<default lexicon>"
    else:
        try:
            text = Path(path).read_bytes().decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"not UTF-8: {e}", path) from e
        src = path
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, src, e.lineno) from e
    try:
        return Lexicon.from_dict(d)
    except InvalidArgumentError as e:
        raise FormatError(str(e), src) from e


def default_lexicon():
    return load_lexicon(None)


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple
    source: str = ""

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


@dataclass(frozen=True)
class AttributePhrase:
    attributes: tuple  # ((word, category), ...)
    head_noun: str
    span: tuple  # (start, end), end exclusive

    @property
    def attribute_words(self):
        return tuple(w for w, _ in self.attributes)

    @property
    def tokens(self):
        return self.attribute_words + (self.head_noun,)

    @property
    def text(self):
        return " ".join(self.tokens)

    @property
    def pairs(self):
        """(attribute, noun) pairs mentioned by this phrase."""
        return tuple((w, self.head_noun) for w in self.attribute_words)

    def flippable_positions(self):
        return [k for k, (_, cat) in enumerate(self.attributes) if cat in FLIPPABLE]

    def to_dict(self):
        return {
            "text": self.text,
            "attributes": [{"word": w, "category": c} for w, c in self.attributes],
            "head_noun": self.head_noun,
            "span": list(self.span),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple((a["word"], a["category"]) for a in d["attributes"]),
            d["head_noun"],
            tuple(d["span"]),
        )


def phrase_from_text(text, lex, start=0):
    """Build a single phrase from ``"attr ... attr noun"`` text."""
    found = chunk_phrases(tokenize(text), lex)
    toks = tokenize(text).tokens
    if len(found) != 1 or found[0].span != (0, len(toks)):
        raise InvalidArgumentError(f"{text!r} is not a single attribute phrase")
    p = found[0]
    return AttributePhrase(p.attributes, p.head_noun, (start, start + len(toks)))


def tokenize(sentence):
    cleaned = _PUNCT.sub(" ", sentence.lower())
    return TokenSequence(tuple(cleaned.split()), sentence)


def chunk_phrases(tokens, lex):
    toks = tokens.tokens if isinstance(tokens, TokenSequence) else tuple(tokens)
    phrases = []
    run = []
    for k, tok in enumerate(toks):
        cat = lex.category(tok)
        if cat is not None:
            run.append((tok, cat))
            continue
        if run and tok not in lex.stopwords:
            phrases.append(AttributePhrase(tuple(run), tok, (k - len(run), k + 1)))
        run = []
    return phrases
