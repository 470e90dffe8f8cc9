"""Command-line entry point.

Exit codes: 0 success, 2 config/validation error, 3 data error,
4 numeric failure.
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import critic as C
from .chunker import chunk_phrases, dump_lexicon, load_lexicon, tokenize
from .config import (ConfigError, DataPaths, GrounderConfig, OutputPaths, RunConfig, dump_config, load_config,
                     validate)
from .dataset import load_dataset
from .errors import (CheckpointIncompatibleError, FormatError, InsufficientDataError, InvalidArgumentError,
                     MissingGroundingError, NotFlippableError, NumericError, ReferentialIntegrityError)
from .evaluate import evaluate
from .grounding import (SyntheticGrounder, file_grounder_load, ground_all, truth_phrases, write_groundings,
                        write_images)
from .jsonl import dumps, write_jsonl
from .negatives import make_negative, make_rng
from .ranker import rank, read_candidates, read_ranked, write_candidates, write_ranked
from .synth import BenchmarkConfig, generate

log = logging.getLogger("phrasecritic")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _emit(records, out):
    if out:
        write_jsonl(out, records)
    else:
        for rec in records:
            sys.stdout.write(dumps(rec) + "\n")


def _read_lines(path):
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"not UTF-8 ({e.reason} at byte {e.start})", path) from e
    return [line for line in text.splitlines() if line.strip()]


def _sentences(args):
    if args.sentence is not None:
        return [args.sentence]
    if args.input is not None:
        return _read_lines(args.input)
    raise ConfigError("give --sentence or --input")


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.lam is not None:
        cfg.lam = args.lam
    if args.grounder is not None:
        cfg.grounder.kind = args.grounder
    return validate(cfg)


def _grounder(cfg, images, lex):
    if cfg.grounder.kind == "file":
        g = file_grounder_load(cfg.grounder.path, lex)
        if g.feature_dim() not in (0, cfg.dims.d_r):
            raise ConfigError(f"groundings have {g.feature_dim()} features, dims.d_r is {cfg.dims.d_r}")
        return g
    return SyntheticGrounder(images, cfg.grounder.synthetic)


def _need(path, what):
    if not path:
        raise ConfigError(f"config does not name {what}")
    return path


# ---------------------------------------------------------------------------


def cmd_chunk(args):
    lex = load_lexicon(args.lexicon)
    records = []
    for s in _sentences(args):
        records.append({"sentence": s, "phrases": [p.to_dict() for p in chunk_phrases(tokenize(s), lex)]})
    _emit(records, args.out)
    return EXIT_OK


def cmd_flip(args):
    cfg = _config(args)
    lex = load_lexicon(args.lexicon or cfg.data.lexicon)
    rng = make_rng([cfg.seed, 5])
    records = []
    for s in _sentences(args):
        phrases = chunk_phrases(tokenize(s), lex)
        negatives = []
        for _ in range(args.count):
            neg = make_negative(phrases, lex, cfg.flip_policy, rng)
            negatives.append([p.text for p in neg])
        records.append({"sentence": s, "phrases": [p.text for p in phrases], "negatives": negatives})
    _emit(records, args.out)
    return EXIT_OK


def cmd_synth_gen(args):
    seed = args.seed if args.seed is not None else 0
    out = Path(args.out or "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    lex = load_lexicon(args.lexicon)
    bench = generate(lex, BenchmarkConfig(seed=seed, n_train=args.n_train, n_test=args.n_test,
                                          candidates_per_image=args.candidates))
    write_images(out / "images_train.jsonl", bench.train_images)
    write_images(out / "images_test.jsonl", bench.test_images)
    write_candidates(out / "candidates.jsonl", bench.candidates)
    dump_lexicon(lex, out / "lexicon.json")

    cfg = RunConfig(seed=seed)
    cfg.train = replace(cfg.train, patience=5)
    # replayable groundings for every phrase the test candidates mention
    grounder = SyntheticGrounder(bench.train_images + bench.test_images, cfg.grounder.synthetic)
    rows = {}
    for img in bench.train_images + bench.test_images:
        for p in truth_phrases(img, lex):
            rows[(img.image_id, p.tokens)] = (img.image_id, grounder.ground(img.image_id, p))
    for cand in bench.candidates:
        for p in chunk_phrases(cand.tokens, lex):
            rows.setdefault((cand.image_id, p.tokens), (cand.image_id, grounder.ground(cand.image_id, p)))
    write_groundings(out / "groundings.jsonl", rows.values())

    cfg.grounder = GrounderConfig("synthetic", str(out / "groundings.jsonl"), cfg.grounder.synthetic)
    cfg.data = DataPaths(images=str(out / "images_train.jsonl"), heldout_images=str(out / "images_test.jsonl"),
                         candidates=str(out / "candidates.jsonl"), lexicon=str(out / "lexicon.json"))
    cfg.outputs = OutputPaths(*(str(out / name) for name in
                                ("critic.ckpt.json", "loss_history.jsonl", "ranked.jsonl", "report.json")))
    dump_config(cfg, out / "config.json", relative_to=out)
    print(json.dumps({"out": str(out), "train_images": len(bench.train_images),
                      "test_images": len(bench.test_images), "candidates": len(bench.candidates)}))
    return EXIT_OK


def _split(images, fraction, seed):
    if fraction == 0 or len(images) < 2:
        return images, []
    n_held = min(len(images) - 1, max(1, round(fraction * len(images))))
    order = make_rng([seed, 3]).permutation(len(images))
    held = {int(k) for k in order[:n_held]}
    return ([img for k, img in enumerate(images) if k not in held],
            [img for k, img in enumerate(images) if k in held])


def cmd_train(args):
    cfg = _config(args)
    tc = cfg.train_config()
    data = load_dataset(_need(cfg.data.images, "data.images"), None, cfg.data.lexicon)
    if cfg.data.heldout_images:
        train_images = data.images
        heldout = load_dataset(cfg.data.heldout_images, None, cfg.data.lexicon).images
    else:
        train_images, heldout = _split(data.images, cfg.heldout_fraction, cfg.seed)
    grounder = _grounder(cfg, train_images + heldout, data.lexicon)

    model = C.init_model(cfg.dims, cfg.seed)
    model, history = C.train(model, train_images, grounder, data.lexicon, tc)
    ckpt = args.out or cfg.outputs.checkpoint
    C.save_checkpoint(model, ckpt)
    write_jsonl(cfg.outputs.history, ({"epoch": k, "mean_loss": v} for k, v in enumerate(history, 1)))

    summary = {"checkpoint": ckpt, "epochs": len(history), "final_loss": history[-1]}
    if heldout:
        pairs = C.make_pairs(heldout, grounder, data.lexicon, tc.negatives_per_image,
                             cfg.flip_policy, make_rng([cfg.seed, 2]))
        summary["heldout_pairwise_accuracy"] = C.pairwise_accuracy(model, pairs)
    print(json.dumps(summary))
    return EXIT_OK


def _load_model(cfg, args):
    path = args.checkpoint or cfg.outputs.checkpoint
    return C.load_checkpoint(path, expect_dims=cfg.dims)


def _all_images(cfg, lex_path):
    data = load_dataset(_need(cfg.data.images, "data.images"), None, lex_path)
    images = list(data.images)
    if cfg.data.heldout_images:
        images += load_dataset(cfg.data.heldout_images, None, lex_path).images
    return images, data.lexicon


def cmd_score(args):
    cfg = _config(args)
    images, lex = _all_images(cfg, cfg.data.lexicon)
    if args.image not in {img.image_id for img in images}:
        raise ReferentialIntegrityError(f"unknown image {args.image!r}")
    model = _load_model(cfg, args)
    grounder = _grounder(cfg, images, lex)
    records = []
    for s in _sentences(args):
        phrases = chunk_phrases(tokenize(s), lex)
        rec = {"image_id": args.image, "sentence": s, "phrases": [p.text for p in phrases], "S_r": None}
        if phrases:
            rec["S_r"] = C.critic_score(model, ground_all(grounder, args.image, phrases))
        records.append(rec)
    _emit(records, args.out)
    return EXIT_OK


def cmd_rank(args):
    cfg = _config(args)
    images, lex = _all_images(cfg, cfg.data.lexicon)
    known = {img.image_id for img in images}
    by_image = {}
    for c in read_candidates(_need(cfg.data.candidates, "data.candidates")):
        if c.image_id not in known:
            raise ReferentialIntegrityError(f"candidate {c.candidate_index} references unknown image {c.image_id!r}")
        by_image.setdefault(c.image_id, []).append(c)
    model = _load_model(cfg, args)
    grounder = _grounder(cfg, images, lex)
    ranked = [rank(cs, model, grounder, lex, cfg.lam, cfg.dedupe_phrases, cfg.length_normalize)
              for cs in by_image.values()]
    for r in (r for rs in ranked for r in rs):
        if r.relevance is not None and not math.isfinite(r.relevance):
            raise NumericError(f"non-finite relevance for candidate {r.candidate.candidate_index}")
    out = args.out or cfg.outputs.ranked
    write_ranked(out, ranked)
    print(json.dumps({"ranked": out, "images": len(ranked), "candidates": sum(map(len, ranked))}))
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    ranked_path = args.ranked or cfg.outputs.ranked
    images, _ = _all_images(cfg, cfg.data.lexicon) if not args.images else (
        load_dataset(args.images).images, None)
    report = evaluate(read_ranked(ranked_path), images)
    out = args.out or cfg.outputs.report
    Path(out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({k: report[k] for k in ("n_images", "critic", "fluency", "gap")}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (JSON)")
    common.add_argument("--seed", type=int)
    common.add_argument("--lambda", dest="lam", type=float, help="fluency weight in S_r + lambda*S_f")
    common.add_argument("--grounder", choices=("file", "synthetic"))
    common.add_argument("--out", help="output path (file, or directory for synth-gen)")
    common.add_argument("-v", "--verbose", action="store_true")

    # shared flags live on each subcommand; argparse lets subparser defaults
    # clobber values parsed by the parent
    p = argparse.ArgumentParser(prog="phrasecritic")
    sub = p.add_subparsers(dest="command", required=True)

    def text_input(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--sentence")
        g.add_argument("--input", help="file with one sentence per line")

    sp = sub.add_parser("chunk", parents=[common], help="extract attribute phrases")
    text_input(sp)
    sp.add_argument("--lexicon")
    sp.set_defaults(func=cmd_chunk)

    sp = sub.add_parser("flip", parents=[common], help="make flipped-attribute negatives")
    text_input(sp)
    sp.add_argument("--lexicon")
    sp.add_argument("--count", type=int, default=1)
    sp.set_defaults(func=cmd_flip)

    sp = sub.add_parser("synth-gen", parents=[common], help="write a seeded synthetic benchmark")
    sp.add_argument("--lexicon")
    sp.add_argument("--n-train", type=int, default=40)
    sp.add_argument("--n-test", type=int, default=10)
    sp.add_argument("--candidates", type=int, default=20)
    sp.set_defaults(func=cmd_synth_gen)

    sp = sub.add_parser("train", parents=[common], help="train the critic")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", parents=[common], help="relevance score of sentences for one image")
    text_input(sp)
    sp.add_argument("--image", required=True)
    sp.add_argument("--checkpoint")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("rank", parents=[common], help="rerank candidate explanations")
    sp.add_argument("--checkpoint")
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("eval", parents=[common], help="attribute relevance of top-ranked explanations")
    sp.add_argument("--ranked")
    sp.add_argument("--images")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointIncompatibleError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ReferentialIntegrityError, MissingGroundingError, InsufficientDataError,
            NotFlippableError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except InvalidArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
