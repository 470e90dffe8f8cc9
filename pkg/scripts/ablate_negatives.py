"""Flipped-attribute negatives vs. negatives borrowed from another image.

Both critics are scored on held-out flipped pairs, which differ from the
positive only in one or two attribute words.

    python3 scripts/ablate_negatives.py --seeds 0 1
"""

import argparse
import math

from phrasecritic import critic as C
from phrasecritic import tensor as T
from phrasecritic.chunker import default_lexicon
from phrasecritic.experiment import SyntheticRun, pair_outcomes, prepare, rank_all
from phrasecritic.grounding import ground_all, truth_phrases
from phrasecritic.negatives import make_rng, sample_mismatch


def mismatch_pairs(images, grounder, lex, count, rng, truth):
    pairs = []
    for img in images:
        positive = tuple(ground_all(grounder, img.image_id, truth[img.image_id]))
        for _ in range(count):
            neg = sample_mismatch(truth, img.image_id, rng)
            pairs.append(C.TrainPair(img.image_id, positive, tuple(ground_all(grounder, img.image_id, neg))))
    return pairs


def train_mismatch(run, bench, grounder, lex):
    model = C.init_model(run.dims, run.seed)
    truth = {img.image_id: truth_phrases(img, lex) for img in bench.train_images}
    rng = make_rng([run.seed, 1])
    state = T.AdamState(lr=run.train.lr)
    grads = T.GradStore(model.params)
    best, stale = math.inf, 0
    for _ in range(run.train.epochs):
        order = [bench.train_images[int(k)] for k in rng.permutation(len(bench.train_images))]
        total = 0.0
        pairs = mismatch_pairs(order, grounder, lex, run.train.negatives_per_image, rng, truth)
        for pair in pairs:
            loss, grads = C.pair_loss_and_grad(model, pair, run.train.margin, grads)
            total += loss
            model.params, state = T.adam_step(state, model.params, grads)
        mean = total / len(pairs)
        if mean < best:
            best, stale = mean, 0
        else:
            stale += 1
            if stale >= run.train.patience:
                break
    return model


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    args = ap.parse_args()
    lex = default_lexicon()
    print(f"{'seed':>4} {'negatives':>10} {'flip_acc':>9} {'truth>flip':>11}")
    for seed in args.seeds:
        run = SyntheticRun(seed=seed)
        bench, grounder = prepare(run, lex)
        held = C.make_pairs(bench.test_images, grounder, lex, 5, run.train.flip_policy, make_rng([seed, 2]))
        flipped, _ = C.train(C.init_model(run.dims, seed), bench.train_images, grounder, lex,
                             C.TrainConfig(seed=seed, patience=run.train.patience))
        for name, model in (("flipped", flipped), ("mismatch", train_mismatch(run, bench, grounder, lex))):
            ranked = rank_all(bench.candidates, model, grounder, lex, lam=0.0)
            wins = [w for _, w in pair_outcomes(ranked, "flipped")]
            print(f"{seed:>4} {name:>10} {C.pairwise_accuracy(model, held):>9.3f} {sum(wins) / len(wins):>11.3f}")


if __name__ == "__main__":
    main()
