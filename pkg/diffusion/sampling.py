"""
Outfit sampling: fill-in-the-blank (pfitb), whole-outfit generation (gor)
and the generalized form with any strict subset of slots given.

All three run the same loop. At every step each generated slot reads its
co-items' values from before the step (given items clean, generated ones at
their current noise level), four guidance branches are predicted in one
batch, and every slot advances together.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from tqdm import tqdm

from difashion.exceptions import RequestError
from diffusion.conditioning import (
    ConditionBundle,
    MaskFlags,
    history_condition,
    mix_mutual,
    mutual_condition,
    null_condition,
)
from diffusion.denoiser import predict_noise
from diffusion.guidance import BRANCH_MASKS, compose_cfg
from diffusion.models import decode_images, encode_images
from diffusion.schedule import posterior_step
from engine.rng import Rng
from engine.tensor import Tensor, randn
from wardrobe.item_path import slot_image_path
from wardrobe.models import CATEGORIES
from wardrobe.render import quantize
from wardrobe.storage import save_png

logger = logging.getLogger(__name__)

METADATA_NAME = "metadata.json"
GRID_NAME = "outfit.png"


@dataclass
class SampleResult:
    request: object
    images: dict = field(default_factory=dict)
    given: dict = field(default_factory=dict)
    eta: float = None

    @property
    def image(self):
        """The single generated image of a one-slot result."""
        if len(self.images) != 1:
            raise RequestError(f"Result holds {len(self.images)} generated images, not one")
        return next(iter(self.images.values()))

    def outfit_images(self):
        """(category, image, source) in the request's slot order."""
        rows = []
        for category in self.request.categories:
            if category in self.images:
                rows.append((category, self.images[category], "generated"))
            else:
                rows.append((category, self.given[category], "given"))
        return rows


def slot_seed(seed, category):
    return Rng(seed).spawn(f"slot-{CATEGORIES[category]}")


def _check_request(request, model, dataset):
    request.clean()
    if request.user_id not in dataset.manifest.users:
        raise RequestError(f"Unknown user {request.user_id}")
    for category, item_id in request.given.items():
        if item_id not in dataset.manifest.items:
            raise RequestError(f"Unknown given item {item_id}")
        actual = dataset.item(item_id).category_id
        if actual != category:
            raise RequestError(
                f"Given item {item_id} is a {CATEGORIES[actual]}, not a {CATEGORIES[category]}"
            )
    if request.steps is not None and request.steps != model.schedule.steps:
        raise RequestError(
            f"The model was trained with T={model.schedule.steps}; sampling with "
            f"{request.steps} steps is not supported"
        )


def _generate(request, model, dataset, on_step=None, progress=False):
    _check_request(request, model, dataset)
    frozen = model.frozen()
    schedule = frozen.schedule
    eta = request.eta if request.eta is not None else frozen.eta
    shape = dataset.image_shape
    slots = request.generated_categories

    given = {
        category: Tensor(encode_images(dataset.image(item_id)))
        for category, item_id in request.given.items()
    }
    histories = {}
    for category in slots:
        past = dataset.user_history(request.user_id, category) if frozen.use_history else []
        histories[category] = history_condition(
            [encode_images(dataset.image(item_id)) for item_id in past], shape
        )

    rngs = {category: slot_seed(request.seed, category) for category in slots}
    current = {category: randn(shape, rngs[category]) for category in slots}

    # fixed per slot: null for a model trained without it, and built from
    # clean co-items for a lone generated slot
    fixed_mutual = {}
    if not frozen.use_mutual:
        fixed_mutual = dict.fromkeys(slots)
    elif len(slots) == 1:
        co_items = [given[c] for c in request.categories if c in given]
        fixed_mutual[slots[0]] = (
            mutual_condition(co_items, frozen.mutual) if co_items else None
        )

    steps = tqdm(range(schedule.steps, 0, -1), desc="sample", disable=not progress)
    for t in steps:
        rows, categories = [], []
        for category in slots:
            if category in fixed_mutual:
                mutual = fixed_mutual[category]
            else:
                co_items = [
                    given[c] if c in given else current[c]
                    for c in request.categories
                    if c != category
                ]
                mutual = mutual_condition(co_items, frozen.mutual)
            history, history_masked = histories[category]
            bundle = ConditionBundle(
                category_id=category,
                mutual=null_condition("mutual", shape) if mutual is None else mutual,
                history=history,
                flags=MaskFlags(mutual=mutual is None, history=history_masked),
                num_categories=frozen.num_categories,
            )
            if on_step is not None:
                on_step(t, category, bundle.mutual.data)
            for mask in BRANCH_MASKS:
                branch = bundle.masked(mask)
                mixed = mix_mutual(current[category], branch.mutual, eta)
                rows.append(np.concatenate([mixed.data, branch.history.data]))
                categories.append(branch.category_id)
        predictions = predict_noise(
            frozen.denoiser, Tensor(np.stack(rows)), np.full(len(rows), t), np.asarray(categories)
        ).data.reshape((len(slots), len(BRANCH_MASKS)) + tuple(shape))

        advanced = {}
        for index, category in enumerate(slots):
            eps = Tensor(compose_cfg(*predictions[index], request.scales))
            noise = randn(shape, rngs[category]) if t > 1 else None
            advanced[category] = posterior_step(current[category], eps, t, schedule, noise)
        current = advanced

    logger.info(
        "sampled %s for user %d: %s",
        request.mode,
        request.user_id,
        ", ".join(CATEGORIES[category] for category in slots),
    )
    return SampleResult(
        request=request,
        images={category: decode_images(current[category].data) for category in slots},
        given={category: dataset.image(item_id) for category, item_id in request.given.items()},
        eta=eta,
    )


def _require_mode(request, mode):
    if request.mode != mode:
        raise RequestError(f"Expected a {mode} request, got {request.mode}")


def sample_pfitb(request, model, dataset, on_step=None, progress=False):
    _require_mode(request, "pfitb")
    return _generate(request, model, dataset, on_step, progress)


def sample_gor(request, model, dataset, on_step=None, progress=False):
    _require_mode(request, "gor")
    return _generate(request, model, dataset, on_step, progress)


def sample_generalized(request, model, dataset, on_step=None, progress=False):
    _require_mode(request, "generalized")
    return _generate(request, model, dataset, on_step, progress)


SAMPLERS = {"pfitb": sample_pfitb, "gor": sample_gor, "generalized": sample_generalized}


def sample(request, model, dataset, on_step=None, progress=False):
    if request.mode not in SAMPLERS:
        raise RequestError(f"Unknown sampling mode {request.mode!r}")
    return SAMPLERS[request.mode](request, model, dataset, on_step, progress)


def outfit_grid(images, gap=2):
    """Slot images side by side on a white strip, as a PIL image."""
    pixels = [quantize(image).transpose(1, 2, 0) for image in images]
    height, width = pixels[0].shape[:2]
    grid = Image.new("RGB", (len(pixels) * width + (len(pixels) - 1) * gap, height), "white")
    for index, array in enumerate(pixels):
        grid.paste(Image.fromarray(np.ascontiguousarray(array), mode="RGB"), (index * (width + gap), 0))
    return grid


def write_sample_outputs(result, out_dir, checkpoint_label=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    slots = []
    for index, (category, image, source) in enumerate(result.outfit_images()):
        entry = {"category": CATEGORIES[category], "source": source}
        if source == "generated":
            relative = slot_image_path(f"{index}-{CATEGORIES[category]}")
            save_png(quantize(image), out_dir / relative)
            entry["path"] = relative
        else:
            entry["item_id"] = result.request.given[category]
        slots.append(entry)
    outfit_grid([image for _, image, _ in result.outfit_images()]).save(out_dir / GRID_NAME, format="PNG")

    metadata = {
        "request": result.request.to_dict(),
        "scales": result.request.scales.to_dict(),
        "seed": result.request.seed,
        "eta": result.eta,
        "checkpoint": checkpoint_label,
        "slots": slots,
        "grid": GRID_NAME,
    }
    with open(out_dir / METADATA_NAME, "w", encoding="utf-8") as handle:
        json.dump(metadata, handle, indent=1)
        handle.write("\n")
    return out_dir
