"""Rerank candidate explanations by critic relevance plus fluency."""

import math
from dataclasses import dataclass, field

from .chunker import TokenSequence, chunk_phrases, tokenize
from .critic import critic_score
from .errors import FormatError, InvalidArgumentError, MissingGroundingError
from .grounding import ground_all
from .jsonl import read_jsonl, require, write_jsonl

NO_PHRASES = "no_phrases"
MISSING_GROUNDING = "missing_grounding"


@dataclass(frozen=True)
class ExplanationCandidate:
    image_id: str
    sentence: str
    log_prob: float
    candidate_index: int
    origin: str = None
    counterpart: int = None
    tokens: TokenSequence = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.log_prob <= 0.0:
            raise InvalidArgumentError(f"log_prob must be <= 0, got {self.log_prob}")
        if self.tokens is None:
            object.__setattr__(self, "tokens", tokenize(self.sentence))

    def to_dict(self):
        d = {"image_id": self.image_id, "candidate_index": self.candidate_index,
             "sentence": self.sentence, "log_prob": self.log_prob}
        if self.origin is not None:
            d["origin"] = self.origin
        if self.counterpart is not None:
            d["counterpart"] = self.counterpart
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["image_id"]), d["sentence"], float(d["log_prob"]), int(d["candidate_index"]),
                   d.get("origin"), d.get("counterpart"))


def read_candidates(path):
    out = []
    seen = set()
    for lineno, rec in read_jsonl(path):
        require(rec, ("image_id", "candidate_index", "sentence", "log_prob"), path, lineno)
        try:
            cand = ExplanationCandidate.from_dict(rec)
        except (TypeError, ValueError) as e:
            raise FormatError(f"bad candidate record: {e}", path, lineno) from e
        key = (cand.image_id, cand.candidate_index)
        if key in seen:
            raise FormatError(f"duplicate candidate_index {cand.candidate_index} for image {cand.image_id!r}",
                              path, lineno)
        seen.add(key)
        out.append(cand)
    return out


def write_candidates(path, candidates):
    write_jsonl(path, (c.to_dict() for c in candidates))


@dataclass
class RankedExplanation:
    candidate: ExplanationCandidate
    phrases: list
    groundings: list
    relevance: float  # None when the candidate could not be scored
    combined: float
    rank: int = 0
    flag: str = None

    @property
    def fluency(self):
        return self.candidate.log_prob


def combined_score(relevance, fluency, lam=1.0):
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be >= 0, got {lam}")
    return relevance + lam * fluency


def _dedupe(phrases):
    seen = set()
    out = []
    for p in phrases:
        if p.tokens not in seen:
            seen.add(p.tokens)
            out.append(p)
    return out


def rank(candidates, model, grounder, lex, lam=1.0, dedupe=True, length_normalize=False):
    """Score and sort candidates for one image, best first.

    Repeated mentions of one phrase are scored once (``dedupe``), so a
    sentence cannot raise its relevance by repetition; fluency decides
    between such twins. Candidates without phrases or with an ungroundable
    phrase get ``combined = -inf`` and sink to the bottom in index order.
    """
    if not candidates:
        raise InvalidArgumentError("cannot rank an empty candidate list")
    if lam < 0:
        raise InvalidArgumentError(f"lambda must be >= 0, got {lam}")
    image_ids = {c.image_id for c in candidates}
    if len(image_ids) != 1:
        raise InvalidArgumentError(f"candidates span several images: {sorted(image_ids)}")
    if len({c.candidate_index for c in candidates}) != len(candidates):
        raise InvalidArgumentError("candidate_index values must be unique per image")

    scored = []
    for cand in candidates:
        phrases = chunk_phrases(cand.tokens, lex)
        fluency = cand.log_prob
        if length_normalize and len(cand.tokens):
            fluency /= len(cand.tokens)
        if not phrases:
            scored.append(RankedExplanation(cand, [], [], None, -math.inf, flag=NO_PHRASES))
            continue
        used = _dedupe(phrases) if dedupe else phrases
        try:
            groundings = ground_all(grounder, cand.image_id, used)
        except MissingGroundingError:
            scored.append(RankedExplanation(cand, phrases, [], None, -math.inf, flag=MISSING_GROUNDING))
            continue
        relevance = critic_score(model, groundings)
        scored.append(RankedExplanation(cand, phrases, groundings, relevance,
                                        combined_score(relevance, fluency, lam)))

    scored.sort(key=lambda r: (-r.combined, r.candidate.candidate_index))
    for k, r in enumerate(scored, 1):
        r.rank = k
    return scored


def select_best(ranked):
    if not ranked:
        raise InvalidArgumentError("no ranked explanations to choose from")
    return min(ranked, key=lambda r: r.rank)


def ranked_record(r):
    """Machine-readable annotation of one ranked candidate."""
    boxes = {g.phrase.tokens: g for g in r.groundings}
    phrases = []
    for p in r.phrases:
        g = boxes.get(p.tokens)
        phrases.append({
            "text": p.text,
            "span": list(p.span),
            "box": g.box.as_list() if g else None,
            "s_i": g.score if g else None,
        })
    finite = r.combined is not None and math.isfinite(r.combined)
    rec = {
        "image_id": r.candidate.image_id,
        "candidate_index": r.candidate.candidate_index,
        "rank": r.rank,
        "sentence": r.candidate.sentence,
        "S_r": r.relevance,
        "S_f": r.candidate.log_prob,
        "combined": r.combined if finite else None,
        "phrases": phrases,
        "flag": r.flag,
    }
    if r.candidate.origin is not None:
        rec["origin"] = r.candidate.origin
    return rec


def write_ranked(path, ranked_lists):
    write_jsonl(path, (ranked_record(r) for ranked in ranked_lists for r in ranked))


def read_ranked(path):
    """Ranked records grouped per image, in file order, each list sorted by rank."""
    groups = {}
    for lineno, rec in read_jsonl(path):
        require(rec, ("image_id", "candidate_index", "rank", "sentence", "S_r", "S_f", "combined", "phrases"),
                path, lineno)
        groups.setdefault(str(rec["image_id"]), []).append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: r["rank"])
    return groups
