"""Seeded synthetic bird benchmark standing in for a real image corpus.

Every image gets a set of (attribute, part) pairs. Candidate explanations
for an image are a mix of

* ``truth``: mentions 2-4 true pairs,
* ``flipped``: the same sentence with at least one color/size attribute
  replaced by a word that is false for this image (``counterpart`` points
  at the truth sentence it came from),
* ``plain``: no attribute phrases at all,
* ``duplicate``: a truth sentence that repeats one of its phrases.

Log-probabilities depend only on sentence length, a repetition penalty and
seeded noise, never on whether the attributes are correct.
"""

from dataclasses import dataclass

from .chunker import chunk_phrases, tokenize
from .grounding import ImageRecord
from .negatives import FlipPolicy, make_negative, make_rng
from .ranker import ExplanationCandidate

PARTS = ("beak", "head", "wing", "belly", "eye", "tail", "neck", "breast",
         "crown", "throat", "back", "leg")
PLAIN = (
    "this is a bird",
    "this bird is perched on a branch",
    "a bird sitting in a tree",
    "this is a photo of a bird",
)


@dataclass(frozen=True)
class BenchmarkConfig:
    seed: int = 0
    n_train: int = 40
    n_test: int = 10
    attributes_per_image: int = 6
    candidates_per_image: int = 20
    color_fraction: float = 0.7
    token_cost: float = 0.35
    noise: float = 1.5
    repeat_penalty: float = 3.0


@dataclass
class Benchmark:
    train_images: list
    test_images: list
    candidates: list  # ExplanationCandidate for the test images


def make_image(image_id, lex, config, rng):
    colors = sorted(lex.color)
    sizes = sorted(lex.size)
    k = min(config.attributes_per_image, len(PARTS))
    parts = [PARTS[int(i)] for i in rng.choice(len(PARTS), size=k, replace=False)]
    pairs = []
    for part in parts:
        pool = colors if rng.random() < config.color_fraction else sizes
        pairs.append((pool[int(rng.integers(len(pool)))], part))
    width = int(rng.integers(300, 501))
    height = int(rng.integers(300, 501))
    return ImageRecord(image_id, width, height, tuple(pairs))


def render(phrases):
    """Sentence mentioning ``phrases`` in order."""
    texts = [" ".join(p.tokens) for p in phrases]
    if len(texts) == 1:
        body = f"a {texts[0]}"
    else:
        body = "a " + ", a ".join(texts[:-1]) + f" and a {texts[-1]}"
    return f"this is a bird with {body}"


def _log_prob(sentence, config, rng, repeats=0):
    n = len(tokenize(sentence))
    return -(config.token_cost * n + config.noise * rng.random() + config.repeat_penalty * repeats)


def make_candidates(image, lex, config, rng):
    truth = chunk_phrases(tokenize(" and ".join(f"a {a} {n}" for a, n in image.true_attributes)), lex)
    n_pairs = max(1, (config.candidates_per_image - 4) // 2)
    policy = FlipPolicy(flip_probability=0.5, min_flips=1, exclude_image_attributes=True)
    cands = []

    def add(sentence, origin, counterpart=None, repeats=0):
        cands.append(ExplanationCandidate(image.image_id, sentence, _log_prob(sentence, config, rng, repeats),
                                          len(cands), origin, counterpart))

    for _ in range(n_pairs):
        m = int(rng.integers(2, min(4, len(truth)) + 1))
        picked = sorted(int(i) for i in rng.choice(len(truth), size=m, replace=False))
        phrases = [truth[i] for i in picked]
        add(render(phrases), "truth")
        truth_index = len(cands) - 1
        flipped = make_negative(phrases, lex, policy, rng, image.attribute_set)
        add(render(flipped), "flipped", counterpart=truth_index)

    while len(cands) < config.candidates_per_image - 1:
        add(PLAIN[int(rng.integers(len(PLAIN)))], "plain")

    # a repetitive twin of the first truth sentence
    first = chunk_phrases(cands[0].tokens, lex)
    add(render([first[0]] + first), "duplicate", counterpart=0, repeats=1)
    return cands[:config.candidates_per_image]


def generate(lex, config=BenchmarkConfig()):
    rng = make_rng([config.seed, 7])
    train = [make_image(f"train{k:03d}", lex, config, rng) for k in range(config.n_train)]
    test = [make_image(f"test{k:03d}", lex, config, rng) for k in range(config.n_test)]
    candidates = []
    for img in test:
        candidates.extend(make_candidates(img, lex, config, rng))
    return Benchmark(train, test, candidates)
