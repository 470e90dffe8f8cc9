"""Attribute relevance of the top-ranked explanation per image.

Relevance of one explanation is the fraction of distinct (attribute, noun)
pairs it mentions that are true for the image. Two selections are compared:
the critic's rank-1 candidate and the highest-fluency candidate among
those that mention any attribute. Images whose selection mentions nothing
are left out of that selection's mean.
"""

from .errors import ReferentialIntegrityError


def phrase_pairs(text):
    words = text.split()
    return {(w, words[-1]) for w in words[:-1]}


def mentioned_pairs(record):
    pairs = set()
    for p in record["phrases"]:
        pairs |= phrase_pairs(p["text"])
    return pairs


def attribute_relevance(pairs, truth):
    if not pairs:
        return None
    return len(pairs & truth) / len(pairs)


def fluency_pick(records):
    bearing = [r for r in records if r["phrases"]]
    if not bearing:
        return None
    return max(bearing, key=lambda r: (r["S_f"], -r["candidate_index"]))


def evaluate(ranked, images):
    """``ranked``: image_id -> records sorted by rank; ``images``: ImageRecords."""
    by_id = {img.image_id: img for img in images}
    per_image = []
    for image_id, records in ranked.items():
        if image_id not in by_id:
            raise ReferentialIntegrityError(f"ranked output references unknown image {image_id!r}")
        truth = by_id[image_id].attribute_set
        top = records[0]
        base = fluency_pick(records)
        per_image.append({
            "image_id": image_id,
            "critic": attribute_relevance(mentioned_pairs(top), truth),
            "critic_candidate": top["candidate_index"],
            "fluency": attribute_relevance(mentioned_pairs(base), truth) if base else None,
            "fluency_candidate": base["candidate_index"] if base else None,
        })

    def mean(key):
        vals = [r[key] for r in per_image if r[key] is not None]
        return sum(vals) / len(vals) if vals else None

    critic, fluency = mean("critic"), mean("fluency")
    return {
        "n_images": len(per_image),
        "critic": critic,
        "fluency": fluency,
        "gap": critic - fluency if critic is not None and fluency is not None else None,
        "per_image": per_image,
    }
