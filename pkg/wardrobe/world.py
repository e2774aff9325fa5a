import logging

from wardrobe.models import (
    CATEGORIES,
    PATTERNS,
    SPLITS,
    DatasetManifest,
    FashionDataset,
    ItemRecord,
    OutfitRecord,
    UserRecord,
    collect_user_items,
    split_counts,
    wrap_hue,
)
from wardrobe.render import quantize, render_item

logger = logging.getLogger(__name__)


def generate_world(config, rng):
    """
    Build users, outfits and items whose compatibility and preference are
    known by construction: every user has a preferred hue, every outfit a
    base hue within delta of it, every item a hue within delta/2 of its
    outfit's base hue.
    """
    config.clean()
    delta = config.delta
    pattern_ids = [PATTERNS.index(name) for name in config.patterns]
    items, outfits, users, splits, images = {}, {}, {}, {}, {}

    for user_id in range(config.num_users):
        preferred = wrap_hue(rng.uniform())
        outfit_ids = []
        for _ in range(config.outfits_per_user):
            outfit_id = len(outfits)
            base_hue = wrap_hue(preferred + rng.uniform(-delta, delta))
            item_ids = []
            for category in range(len(CATEGORIES)):
                item_id = len(items)
                item = ItemRecord(
                    item_id=item_id,
                    category_id=category,
                    hue=wrap_hue(base_hue + rng.uniform(-delta / 2, delta / 2)),
                    pattern_id=pattern_ids[int(rng.integers(0, len(pattern_ids)))],
                )
                items[item_id] = item
                images[item_id] = quantize(
                    render_item(
                        category, item.hue, item.pattern_id, config.height, config.width
                    )
                )
                item_ids.append(item_id)
            outfits[outfit_id] = OutfitRecord(
                outfit_id=outfit_id,
                user_id=user_id,
                item_ids=tuple(item_ids),
                base_hue=base_hue,
            )
            outfit_ids.append(outfit_id)

        order = rng.permutation(len(outfit_ids))
        train, valid, _ = split_counts(len(outfit_ids))
        for rank, position in enumerate(order):
            split = SPLITS[0] if rank < train else SPLITS[1] if rank < train + valid else SPLITS[2]
            splits[outfit_ids[int(position)]] = split
        users[user_id] = UserRecord(
            user_id=user_id, preferred_hue=preferred, outfit_ids=tuple(outfit_ids)
        )

    manifest = collect_user_items(
        DatasetManifest(
            config=config, items=items, outfits=outfits, users=users, splits=splits
        )
    )
    manifest.clean()
    logger.info(
        "generated %d users, %d outfits, %d items at %dx%d",
        len(users),
        len(outfits),
        len(items),
        config.height,
        config.width,
    )
    return FashionDataset(manifest, images)
