import math

import pytest
from hypothesis import given, settings, strategies as st

from phrasecritic import critic as C
from phrasecritic.errors import InvalidArgumentError
from phrasecritic.evaluate import attribute_relevance, evaluate, fluency_pick, phrase_pairs
from phrasecritic.grounding import ImageRecord, SyntheticConfig, SyntheticGrounder, file_grounder_load
from phrasecritic.ranker import (MISSING_GROUNDING, NO_PHRASES, ExplanationCandidate, combined_score, rank,
                                 ranked_record, read_candidates, read_ranked, select_best, write_candidates,
                                 write_ranked)

DIMS = C.CriticDims(d_w=4, d_r=8, d_h=6, d_hidden=5, buckets=64)
IMG = ImageRecord("im", 100, 80, (("red", "beak"), ("long", "neck"), ("black", "face")))


@pytest.fixture
def grounder():
    return SyntheticGrounder([IMG], SyntheticConfig(d_r=DIMS.d_r))


@pytest.fixture
def model():
    return C.init_model(DIMS, 3)


def cand(sentence, log_prob, k):
    return ExplanationCandidate("im", sentence, log_prob, k)


def test_combined_score():
    assert combined_score(2.0, -3.0, 0.5) == 0.5
    assert combined_score(2.0, -3.0, 0.0) == 2.0
    with pytest.raises(InvalidArgumentError):
        combined_score(1.0, -1.0, -0.1)


def test_single_candidate(model, grounder, lex):
    out = rank([cand("a red beak", -1.0, 0)], model, grounder, lex)
    assert len(out) == 1 and out[0].rank == 1
    assert out[0].combined == pytest.approx(out[0].relevance - 1.0)
    assert select_best(out) is out[0]


def test_repeated_phrase_twin_loses_on_fluency(model, grounder, lex):
    base = "this bird has a long neck"
    twin = "this bird has a long neck and a long neck"
    out = rank([cand(twin, -4.0, 0), cand(base, -2.0, 1)], model, grounder, lex, lam=1.0)
    assert out[0].relevance == out[1].relevance
    assert [r.candidate.candidate_index for r in out] == [1, 0]
    # without dedupe the twin gets a different relevance
    raw = rank([cand(twin, -4.0, 0), cand(base, -2.0, 1)], model, grounder, lex, dedupe=False)
    assert raw[0].relevance != raw[1].relevance


def test_unscorable_candidates_sink(model, grounder, lex, tmp_path):
    cs = [cand("this is a bird", -0.1, 0), cand("a red beak", -5.0, 1), cand("a bird", -0.2, 2)]
    out = rank(cs, model, grounder, lex)
    assert [r.candidate.candidate_index for r in out] == [1, 0, 2]
    assert out[1].flag == NO_PHRASES and out[1].combined == -math.inf
    rec = ranked_record(out[1])
    assert rec["combined"] is None and rec["phrases"] == [] and rec["rank"] == 2

    p = tmp_path / "g.jsonl"
    p.write_text('{"image_id": "im", "phrase": "red beak", "box": [0, 0, 1, 1], "score": 0.9, '
                 '"features": [0, 0, 0, 0, 0, 0, 0, 1]}\n')
    fg = file_grounder_load(p, lex)
    out = rank([cand("a red beak and a long neck", -1.0, 0), cand("a red beak", -3.0, 1)], model, fg, lex)
    assert [r.candidate.candidate_index for r in out] == [1, 0]
    assert out[1].flag == MISSING_GROUNDING


def test_rank_errors(model, grounder, lex):
    with pytest.raises(InvalidArgumentError):
        rank([], model, grounder, lex)
    with pytest.raises(InvalidArgumentError):
        rank([cand("a red beak", -1.0, 0)], model, grounder, lex, lam=-1)
    with pytest.raises(InvalidArgumentError):
        rank([cand("a red beak", -1.0, 0), cand("a red beak", -1.0, 0)], model, grounder, lex)
    with pytest.raises(InvalidArgumentError):
        rank([cand("a red beak", -1.0, 0), ExplanationCandidate("other", "a red beak", -1.0, 1)],
             model, grounder, lex)
    with pytest.raises(InvalidArgumentError):
        select_best([])
    with pytest.raises(InvalidArgumentError):
        cand("a red beak", 0.5, 0)


POOL = ["a red beak", "a black face", "a long neck", "a red beak and a long neck", "a blue wing",
        "a short neck and a black face", "this is a bird", "a white eye", "a pointed beak"]


@settings(max_examples=60, deadline=None)
@given(st.permutations(list(range(len(POOL)))), st.floats(0, 2), st.floats(-3, 3),
       st.lists(st.floats(-20, 0), min_size=len(POOL), max_size=len(POOL)))
def test_rank_is_permutation_and_order_invariant(perm, lam, shift, log_probs):
    from phrasecritic.chunker import default_lexicon
    lex = default_lexicon()
    model = C.init_model(DIMS, 3)
    grounder = SyntheticGrounder([IMG], SyntheticConfig(d_r=DIMS.d_r))
    cs = [cand(s, lp, k) for k, (s, lp) in enumerate(zip(POOL, log_probs))]
    a = rank(cs, model, grounder, lex, lam=lam)
    b = rank([cs[i] for i in perm], model, grounder, lex, lam=lam)
    order = [r.candidate.candidate_index for r in a]
    assert sorted(order) == list(range(len(POOL)))
    assert [r.rank for r in a] == list(range(1, len(POOL) + 1))
    assert order == [r.candidate.candidate_index for r in b]
    # a constant added to every relevance leaves the best candidate unchanged
    shifted = model.copy()
    shifted.params["nn.b2"] = shifted.params["nn.b2"] + shift
    best = select_best(rank(cs, shifted, grounder, lex, lam=lam)).candidate.candidate_index
    finite = [r for r in a if math.isfinite(r.combined)]
    top = [r.candidate.candidate_index for r in finite if math.isclose(r.combined, finite[0].combined,
                                                                       abs_tol=1e-9)]
    assert best in top


def test_ties_keep_index_order(grounder, lex):
    zero = C.zero_model(DIMS)
    out = rank([cand("a red beak", -1.0, 2), cand("a long neck", -1.0, 0), cand("a black face", -1.0, 1)],
               zero, grounder, lex)
    assert [r.candidate.candidate_index for r in out] == [0, 1, 2]


def test_candidate_and_ranked_io(tmp_path, model, grounder, lex):
    cs = [cand("a red beak", -1.0, 0), ExplanationCandidate("im", "a long neck", -2.5, 1, "truth", 0)]
    write_candidates(tmp_path / "c.jsonl", cs)
    assert read_candidates(tmp_path / "c.jsonl") == cs
    out = rank(cs, model, grounder, lex)
    write_ranked(tmp_path / "r.jsonl", [out])
    groups = read_ranked(tmp_path / "r.jsonl")
    recs = groups["im"]
    assert [r["rank"] for r in recs] == [1, 2]
    assert recs[0]["phrases"][0]["box"] is not None
    assert recs[0]["S_r"] == out[0].relevance


def test_evaluate_examples():
    assert phrase_pairs("large white bird") == {("large", "bird"), ("white", "bird")}
    assert attribute_relevance({("red", "beak"), ("blue", "beak")}, {("red", "beak")}) == 0.5
    assert attribute_relevance(set(), {("red", "beak")}) is None

    def rec(k, text, s_f):
        return {"candidate_index": k, "S_f": s_f, "phrases": [{"text": text}] if text else []}

    records = [rec(0, "red beak", -3.0), rec(1, "blue beak", -1.0), rec(2, None, -0.1)]
    assert fluency_pick(records)["candidate_index"] == 1
    assert fluency_pick([rec(0, None, -1.0)]) is None
    report = evaluate({"im": records}, [IMG])
    assert report["critic"] == 1.0 and report["fluency"] == 0.0 and report["gap"] == 1.0
    half = [rec(0, "red beak", -1.0), rec(1, "blue neck", -2.0)]
    half[0]["phrases"].append({"text": "blue face"})
    assert evaluate({"im": half}, [IMG])["critic"] == 0.5
