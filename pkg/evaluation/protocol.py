"""
The evaluation protocol: generate PFITB and GOR samples for the outfits of
one split and score them.

Samples come from one of three sources: the diffusion model, the real
ground-truth items ("real") or uniform noise images ("noise"). The last two
pin the self-evaluation and chance-level baselines.
"""
import dataclasses
import logging

import numpy as np
from tqdm import tqdm

from difashion.exceptions import ConfigError
from diffusion.models import SampleRequest
from diffusion.sampling import sample_gor, sample_pfitb
from engine.rng import Rng
from evaluation.metrics import (
    compatibility_oracle,
    cosine_matrix,
    fid,
    lpips_proxy,
    modified_is,
    personalization,
    user_profile,
)
from evaluation.models import SWEEP_PARAMETERS, MetricsReport
from evaluation.retrieval import (
    CatalogIndex,
    retrieval_compatibility,
    retrieval_gor,
    retrieval_pfitb,
    sample_negatives,
)
from wardrobe.models import CATEGORIES

logger = logging.getLogger(__name__)


def _mean(values):
    values = [value for value in values if value is not None]
    return (float(np.mean(values)) if values else None), len(values)


class SampleSource:
    """Produces the PFITB and GOR images of one outfit."""

    def __init__(self, config, dataset, model=None):
        self.config = config
        self.dataset = dataset
        self.model = model
        if config.source == "model" and model is None:
            raise ConfigError("Evaluating the model source needs a trained model")

    def _noise(self, rng):
        return rng.uniform(0.0, 1.0, size=self.dataset.image_shape)

    def pfitb(self, outfit, blank, rng):
        if self.config.source == "real":
            return self.dataset.image(outfit.item_ids[blank])
        if self.config.source == "noise":
            return self._noise(rng)
        request = SampleRequest(
            mode="pfitb",
            user_id=outfit.user_id,
            categories=tuple(range(len(CATEGORIES))),
            given={c: outfit.item_ids[c] for c in range(len(CATEGORIES)) if c != blank},
            scales=self.config.scales,
            eta=self.config.eta,
            seed=int(rng.integers(0, 2**31)),
        )
        return sample_pfitb(request, self.model, self.dataset).image

    def gor(self, outfit, rng):
        if self.config.source == "real":
            return {c: self.dataset.image(item_id) for c, item_id in enumerate(outfit.item_ids)}
        if self.config.source == "noise":
            return {c: self._noise(rng) for c in range(len(CATEGORIES))}
        request = SampleRequest(
            mode="gor",
            user_id=outfit.user_id,
            categories=tuple(range(len(CATEGORIES))),
            scales=self.config.scales,
            eta=self.config.eta,
            seed=int(rng.integers(0, 2**31)),
        )
        return sample_gor(request, self.model, self.dataset).images


def evaluate(dataset, classifier, config, model=None, progress=True):
    """
    Score up to ``config.n_samples`` outfits of ``config.split``: one PFITB
    blank and one whole-outfit generation per outfit.
    """
    config.clean()
    outfit_ids = dataset.outfits_in(config.split)[: config.n_samples]
    if not outfit_ids:
        raise ConfigError(f"The {config.split} split has no outfits to evaluate")
    minimum = classifier.feature_dim + 1
    if len(outfit_ids) * len(CATEGORIES) < minimum:
        raise ConfigError(
            f"{len(outfit_ids)} outfits give {len(outfit_ids) * len(CATEGORIES)} samples; "
            f"fid needs at least {minimum}, so evaluate at least "
            f"{-(-minimum // len(CATEGORIES))} outfits"
        )

    source = SampleSource(config, dataset, model)
    index = CatalogIndex(dataset, classifier)
    rng = Rng(config.seed).spawn("eval")
    profiles = {}

    generated, intended, gor_scores, grounded = [], [], [], []
    pfitb_pairs, hits = [], []
    feature_scores, hue_scores = [], []
    for outfit_id in tqdm(outfit_ids, desc="evaluate", disable=not progress):
        outfit = dataset.outfit(outfit_id)
        outfit_rng = rng.spawn(f"outfit-{outfit_id}")
        blank = int(outfit_rng.integers(0, len(CATEGORIES)))

        image = source.pfitb(outfit, blank, outfit_rng.spawn("pfitb"))
        truth = outfit.item_ids[blank]
        negatives = sample_negatives(
            dataset, truth, outfit_rng.spawn("negatives"), config.same_category_negatives
        )
        hits.append(retrieval_pfitb(image, truth, negatives, classifier, dataset, index).hit)
        pfitb_pairs.append((image, truth))

        outfit_images = source.gor(outfit, outfit_rng.spawn("gor"))
        gor_scores.append(compatibility_oracle([outfit_images[c] for c in sorted(outfit_images)]))
        grounded.append(retrieval_compatibility(retrieval_gor(outfit_images, classifier, index), dataset))

        images = [image] + [outfit_images[c] for c in sorted(outfit_images)]
        generated.extend(images)
        intended.extend([blank] + sorted(outfit_images))
        if outfit.user_id not in profiles:
            profiles[outfit.user_id] = user_profile(outfit.user_id, classifier, dataset)
        score = personalization(images, outfit.user_id, classifier, dataset, profiles[outfit.user_id])
        feature_scores.extend([score.feature] * score.feature_count)
        hue_scores.append((score.hue, score.hue_count))

    gen_features = classifier.features(np.stack(generated))
    probabilities = classifier.probabilities(np.stack(generated))
    real_ids = [item_id for outfit_id in outfit_ids for item_id in dataset.outfit(outfit_id).item_ids]
    real_features = index.features(real_ids)

    truth_features = index.features([truth for _, truth in pfitb_pairs])
    pfitb_features = classifier.features(np.stack([image for image, _ in pfitb_pairs]))
    cis_values = np.diag(cosine_matrix(pfitb_features, truth_features))

    hue_total = sum(count for _, count in hue_scores)
    compatibility, compatibility_count = _mean(gor_scores)
    grounded_value, grounded_count = _mean(grounded)
    feature_value, feature_count = _mean(feature_scores)
    report = MetricsReport(
        fid=fid(real_features, gen_features),
        modified_is=modified_is(probabilities),
        is_acc=float(np.mean(np.argmax(probabilities, axis=1) == np.asarray(intended))),
        cis=float(np.mean(cis_values)),
        lpips_proxy=lpips_proxy(cis_values),
        compatibility=compatibility,
        personalization_feature=feature_value,
        personalization_hue=(
            sum(value * count for value, count in hue_scores if value is not None) / hue_total
            if hue_total
            else None
        ),
        retrieval_accuracy=float(np.mean(hits)),
        retrieval_compatibility=grounded_value,
        counts={
            "outfits": len(outfit_ids),
            "fid": len(generated),
            "fid_real": len(real_ids),
            "modified_is": len(generated),
            "is_acc": len(generated),
            "cis": len(pfitb_pairs),
            "lpips_proxy": len(pfitb_pairs),
            "compatibility": compatibility_count,
            "personalization_feature": feature_count,
            "personalization_hue": hue_total,
            "retrieval_accuracy": len(hits),
            "retrieval_compatibility": grounded_count,
        },
        config=config.to_dict(),
    )
    report.clean()
    logger.info(
        "evaluated %d %s outfits from the %s source: fid %.3f, is_acc %.3f",
        len(outfit_ids),
        config.split,
        config.source,
        report.fid,
        report.is_acc,
    )
    return report


def sweep_config(config, parameter, value):
    if parameter == "eta":
        return dataclasses.replace(config, eta=float(value))
    return dataclasses.replace(
        config, scales=dataclasses.replace(config.scales, **{parameter: float(value)})
    )


def sweep(dataset, classifier, config, parameter, values, model=None, progress=True):
    """One report per value of a guidance scale or the mixing ratio, same seed throughout."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"Unknown sweep parameter {parameter!r}, expected one of {SWEEP_PARAMETERS}")
    if not values:
        raise ConfigError("A sweep needs at least one value")
    rows = []
    for value in values:
        logger.info("sweep %s = %s", parameter, value)
        report = evaluate(dataset, classifier, sweep_config(config, parameter, value), model, progress)
        rows.append((value, report))
    return rows
