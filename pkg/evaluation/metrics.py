"""
Generative and fashion metrics over classifier features and the synthetic
world's hue oracle.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from difashion.exceptions import ContractError
from wardrobe.models import CATEGORIES, circular_distance
from wardrobe.render import dominant_hue

logger = logging.getLogger(__name__)

FID_JITTER = 1e-6


def _symmetric_sqrt(matrix):
    """Square root of a symmetric PSD matrix, negative eigenvalues clipped to 0."""
    values, vectors = linalg.eigh((matrix + matrix.T) / 2.0)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def frechet_distance(mu1, sigma1, mu2, sigma2, jitter=FID_JITTER):
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    sigma1, sigma2 = np.atleast_2d(sigma1), np.atleast_2d(sigma2)
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape:
        raise ContractError(f"fid: shape mismatch {sigma1.shape} vs {sigma2.shape}")
    offset = jitter * np.eye(sigma1.shape[0])
    sigma1, sigma2 = sigma1 + offset, sigma2 + offset
    # Tr sqrt(S1 S2) = Tr sqrt(A S2 A) with A = sqrt(S1), which is symmetric
    root = _symmetric_sqrt(sigma1)
    trace_sqrt = np.trace(_symmetric_sqrt(root @ sigma2 @ root))
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def fid(real_features, gen_features):
    real_features = np.asarray(real_features, dtype=np.float64)
    gen_features = np.asarray(gen_features, dtype=np.float64)
    minimum = real_features.shape[1] + 1
    for name, features in (("real", real_features), ("generated", gen_features)):
        if features.shape[0] < minimum:
            raise ContractError(
                f"fid needs at least {minimum} {name} samples for {minimum - 1}-d features, "
                f"got {features.shape[0]}"
            )
    return frechet_distance(
        real_features.mean(axis=0),
        np.cov(real_features, rowvar=False),
        gen_features.mean(axis=0),
        np.cov(gen_features, rowvar=False),
    )


def modified_is(probabilities):
    """exp of the mean KL divergence from each row to the uniform class distribution."""
    probabilities = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    if np.any(np.abs(probabilities.sum(axis=1) - 1.0) > 1e-6) or np.any(probabilities < 0):
        raise ContractError("modified_is needs rows that are probability vectors")
    classes = probabilities.shape[1]
    terms = np.where(probabilities > 0, probabilities * np.log(np.maximum(probabilities, 1e-300) * classes), 0.0)
    return float(np.exp(terms.sum(axis=1).mean()))


def is_acc(images, categories, classifier):
    categories = np.asarray(categories)
    if len(images) == 0:
        raise ContractError("is_acc needs at least one image")
    if len(images) != len(categories):
        raise ContractError(f"is_acc got {len(images)} images for {len(categories)} categories")
    return float(np.mean(classifier.predict(np.stack(images)) == categories))


def cosine(u, v):
    """Cosine similarity, 0 with a warning when either vector has zero norm."""
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0.0:
        logger.warning("cosine of a zero-norm feature vector taken as 0")
        return 0.0
    return float(np.clip(u @ v / norm, -1.0, 1.0))


def cosine_matrix(queries, keys):
    """Row-wise cosine similarities [Q, K]; zero-norm rows score 0."""
    queries = np.atleast_2d(queries)
    keys = np.atleast_2d(keys)
    q_norm = np.linalg.norm(queries, axis=1, keepdims=True)
    k_norm = np.linalg.norm(keys, axis=1, keepdims=True)
    if np.any(q_norm == 0) or np.any(k_norm == 0):
        logger.warning("cosine of a zero-norm feature vector taken as 0")
    q = np.divide(queries, q_norm, out=np.zeros_like(queries), where=q_norm > 0)
    k = np.divide(keys, k_norm, out=np.zeros_like(keys), where=k_norm > 0)
    return np.clip(q @ k.T, -1.0, 1.0)


def cis(generated, ground_truth, classifier):
    features = classifier.features(np.stack([generated, ground_truth]))
    return cosine(features[0], features[1])


def lpips_proxy(cis_values):
    """Perceptual-distance stand-in: mean of 1 - cis."""
    return float(np.mean(1.0 - np.asarray(cis_values, dtype=np.float64)))


def hue_compatibility(hues):
    hues = [hue for hue in hues if hue is not None]
    if len(hues) < 2:
        return None
    spread = max(circular_distance(a, b) for i, a in enumerate(hues) for b in hues[i + 1:])
    return 1.0 - min(1.0, spread / 0.5)


def compatibility_oracle(images):
    """
    1 - (largest pairwise circular hue distance) / 0.5 over the outfit's
    foreground hues, or None when fewer than two images have a foreground.
    """
    hues = []
    for index, image in enumerate(images):
        hue = dominant_hue(image)
        if hue is None:
            logger.warning("outfit image %d has no foreground; excluded from compatibility", index)
        hues.append(hue)
    return hue_compatibility(hues)


def hue_score(image, preferred_hue):
    hue = dominant_hue(image)
    if hue is None:
        return None
    return 1.0 - min(1.0, circular_distance(hue, preferred_hue) / 0.5)


@dataclass
class PersonalizationScore:
    feature: float = None
    hue: float = None
    feature_count: int = 0
    hue_count: int = 0


def user_profile(user_id, classifier, dataset):
    """Mean features of the user's train-split items, or None for a cold user."""
    item_ids = [
        item_id
        for category in range(len(CATEGORIES))
        for item_id in dataset.user_history(user_id, category)
    ]
    if not item_ids:
        return None
    return classifier.features(dataset.images(item_ids)).mean(axis=0)


def personalization(images, user_id, classifier, dataset, profile=None):
    """
    Mean feature cosine between the user's profile and each image, and the
    mean hue score against the user's preferred hue.
    """
    if len(images) == 0:
        raise ContractError("personalization needs at least one image")
    profile = user_profile(user_id, classifier, dataset) if profile is None else profile
    score = PersonalizationScore()
    if profile is None:
        logger.warning("user %d has no history; feature personalization undefined", user_id)
    else:
        features = classifier.features(np.stack(images))
        score.feature = float(np.mean(cosine_matrix(features, profile[None])[:, 0]))
        score.feature_count = len(images)
    hues = [hue_score(image, dataset.user(user_id).preferred_hue) for image in images]
    hues = [value for value in hues if value is not None]
    if hues:
        score.hue = float(np.mean(hues))
        score.hue_count = len(hues)
    return score
