"""Synthetic end-to-end run: generate, train, rank, evaluate."""

from dataclasses import dataclass, field, replace

from . import critic as C
from .grounding import SyntheticConfig, SyntheticGrounder
from .negatives import make_rng
from .ranker import ranked_record, rank
from .synth import BenchmarkConfig, generate


@dataclass
class SyntheticRun:
    seed: int = 0
    bench: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    dims: C.CriticDims = field(default_factory=C.CriticDims)
    train: C.TrainConfig = field(default_factory=lambda: C.TrainConfig(patience=5))
    sigma: float = 0.0


def prepare(run, lex):
    bench = generate(lex, replace(run.bench, seed=run.seed))
    grounder = SyntheticGrounder(bench.train_images + bench.test_images,
                                 SyntheticConfig(d_r=run.dims.d_r, sigma=run.sigma, seed=run.seed))
    return bench, grounder


def fit(run, bench, grounder, lex):
    tc = replace(run.train, seed=run.seed)
    model, history = C.train(C.init_model(run.dims, run.seed), bench.train_images, grounder, lex, tc)
    pairs = C.make_pairs(bench.test_images, grounder, lex, tc.negatives_per_image, tc.flip_policy,
                         make_rng([run.seed, 2]))
    return model, history, C.pairwise_accuracy(model, pairs)


def rank_all(candidates, model, grounder, lex, lam=1.0, **kw):
    """image_id -> list of RankedExplanation, in first-seen image order."""
    by_image = {}
    for c in candidates:
        by_image.setdefault(c.image_id, []).append(c)
    return {k: rank(cs, model, grounder, lex, lam, **kw) for k, cs in by_image.items()}


def as_records(ranked):
    return {k: [ranked_record(r) for r in rs] for k, rs in ranked.items()}


def pair_outcomes(ranked, origin):
    """(candidate, counterpart) rank comparisons for candidates of one origin.

    Yields (image_id, won) where ``won`` means the counterpart ranked
    strictly above the candidate.
    """
    for image_id, rs in ranked.items():
        pos = {r.candidate.candidate_index: r.rank for r in rs}
        for r in rs:
            if r.candidate.origin == origin:
                yield image_id, pos[r.candidate.counterpart] < r.rank
