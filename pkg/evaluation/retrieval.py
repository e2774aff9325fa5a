"""
Retrieval grounding: ranking candidate catalogue items against a generated
image by classifier-feature cosine.
"""
import logging
from dataclasses import dataclass

import numpy as np

from difashion.exceptions import ContractError
from evaluation.metrics import compatibility_oracle, cosine_matrix
from wardrobe.models import CATEGORIES

logger = logging.getLogger(__name__)

NEGATIVES = 4


@dataclass(frozen=True)
class RetrievalHit:
    rank: int
    hit: bool
    ranking: tuple


class CatalogIndex:
    """Features of every catalogue item, grouped by category and computed once."""

    def __init__(self, dataset, classifier):
        self.dataset = dataset
        self.classifier = classifier
        self._by_category = {}
        self._features = {}

    def category(self, category):
        if category not in self._by_category:
            item_ids = self.dataset.catalog(category)
            features = (
                self.classifier.features(self.dataset.images(item_ids))
                if item_ids
                else np.zeros((0, self.classifier.feature_dim))
            )
            self._by_category[category] = (item_ids, features)
            self._features.update(zip(item_ids, features))
        return self._by_category[category]

    def features(self, item_ids):
        missing = [i for i in item_ids if i not in self._features]
        if missing:
            for category in sorted({self.dataset.item(i).category_id for i in missing}):
                self.category(category)
        return np.stack([self._features[i] for i in item_ids])


def sample_negatives(dataset, ground_truth_id, rng, same_category=False, count=NEGATIVES):
    """``count`` distinct items other than the ground truth, uniformly drawn."""
    if same_category:
        pool = dataset.catalog(dataset.item(ground_truth_id).category_id)
    else:
        pool = sorted(dataset.manifest.items)
    pool = [item_id for item_id in pool if item_id != ground_truth_id]
    if len(pool) < count:
        raise ContractError(f"Only {len(pool)} negatives available, {count} needed")
    order = rng.permutation(len(pool))[:count]
    return [pool[int(index)] for index in order]


def retrieval_pfitb(generated, ground_truth_id, negative_ids, classifier, dataset, index=None):
    """
    Rank the ground truth and its negatives by cosine to the generated image;
    a hit means the ground truth ranks first. Ties go to the lower item id.
    """
    candidates = [ground_truth_id] + list(negative_ids)
    if len(set(candidates)) != len(candidates):
        raise ContractError(f"Retrieval candidates must be distinct, got {candidates}")
    if index is None:
        features = classifier.features(dataset.images(candidates))
    else:
        features = index.features(candidates)
    query = classifier.features(generated)
    scores = cosine_matrix(query, features)[0]
    ranking = tuple(
        candidates[i] for i in sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i]))
    )
    rank = ranking.index(ground_truth_id) + 1
    return RetrievalHit(rank=rank, hit=rank == 1, ranking=ranking)


def retrieval_gor(generated, classifier, index):
    """
    Nearest catalogue item of the slot's category for each generated image,
    keyed by category; None marks a category with an empty catalogue.
    """
    retrieved = {}
    for category, image in generated.items():
        item_ids, features = index.category(category)
        if not item_ids:
            logger.warning("no catalogue items for %s; slot unresolvable", CATEGORIES[category])
            retrieved[category] = None
            continue
        scores = cosine_matrix(classifier.features(image), features)[0]
        best = np.flatnonzero(scores == scores.max())
        retrieved[category] = min(item_ids[int(i)] for i in best)
    return retrieved


def retrieval_compatibility(retrieved, dataset):
    """Compatibility oracle of the outfit assembled from retrieved items."""
    item_ids = [item_id for item_id in retrieved.values() if item_id is not None]
    return compatibility_oracle([dataset.image(item_id) for item_id in item_ids])
