from dataclasses import dataclass
from pathlib import Path

from .chunker import dump_lexicon, load_lexicon
from .errors import ReferentialIntegrityError
from .grounding import read_images, write_images
from .ranker import read_candidates, write_candidates


@dataclass
class Dataset:
    images: list
    candidates: dict  # image_id -> [ExplanationCandidate] in file order
    lexicon: object

    def image(self, image_id):
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise ReferentialIntegrityError(f"unknown image {image_id!r}")

    def all_candidates(self):
        return [c for cands in self.candidates.values() for c in cands]


def load_dataset(images_path, candidates_path=None, lexicon_path=None):
    images = read_images(images_path)
    known = {img.image_id for img in images}
    candidates = {}
    if candidates_path is not None:
        for cand in read_candidates(candidates_path):
            if cand.image_id not in known:
                raise ReferentialIntegrityError(
                    f"{candidates_path}: candidate {cand.candidate_index} references unknown image {cand.image_id!r}")
            candidates.setdefault(cand.image_id, []).append(cand)
    return Dataset(images, candidates, load_lexicon(lexicon_path))


def save_dataset(dataset, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_images(d / "images.jsonl", dataset.images)
    write_candidates(d / "candidates.jsonl", dataset.all_candidates())
    dump_lexicon(dataset.lexicon, d / "lexicon.json")
    return d / "images.jsonl", d / "candidates.jsonl", d / "lexicon.json"
