"""
Records of the synthetic fashion world.

Nothing here is stored in a database; records are plain dataclasses that
validate themselves the way the rest of the project does: ``clean()`` runs
the static ``validate_*`` checks, and each check takes the error class to
raise so serializers can reuse the same rule with their own error type.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from difashion.exceptions import ConfigError, ContractError, DataError

CATEGORIES = ("hat", "top", "bottom", "shoes")
PATTERNS = ("solid", "stripes", "dots")
SPLITS = ("train", "valid", "test")
MIN_OUTFITS_PER_USER = 5


def category_id(value):
    """Category index from an index or a category name."""
    if isinstance(value, str):
        if value not in CATEGORIES:
            raise ContractError(f"Unknown category {value!r}, expected one of {CATEGORIES}")
        return CATEGORIES.index(value)
    index = int(value)
    if not 0 <= index < len(CATEGORIES):
        raise ContractError(f"Unknown category id {index}")
    return index


def wrap_hue(value):
    hue = float(value) % 1.0
    return 0.0 if hue >= 1.0 else hue


def circular_distance(a, b):
    """Distance between two hues on the unit circle, in [0, 0.5]."""
    diff = abs(float(a) - float(b)) % 1.0
    return min(diff, 1.0 - diff)


def split_counts(total):
    """(train, valid, test) sizes for an 8:1:1 split, halves rounded up."""
    held_out = int(np.floor(total / 10 + 0.5))
    return total - 2 * held_out, held_out, held_out


@dataclass(frozen=True)
class WorldConfig:
    height: int = 32
    width: int = 32
    delta: float = 0.08
    num_users: int = 200
    outfits_per_user: int = 30
    patterns: tuple = PATTERNS
    seed: int = 0

    @staticmethod
    def validate_delta(delta, error_to_raise):
        if not 0.0 < delta < 0.25:
            raise error_to_raise({"delta": f"delta must lie in (0, 0.25), got {delta}"})

    @staticmethod
    def validate_resolution(height, width, error_to_raise):
        for name, extent in (("height", height), ("width", width)):
            if extent < 16 or extent % 4:
                raise error_to_raise(
                    {name: f"{name} must be at least 16 and divisible by 4, got {extent}"}
                )

    @staticmethod
    def validate_counts(num_users, outfits_per_user, error_to_raise):
        if num_users < 1:
            raise error_to_raise({"num_users": "At least one user is required."})
        if outfits_per_user < MIN_OUTFITS_PER_USER:
            raise error_to_raise(
                {
                    "outfits_per_user": f"Retained users need at least "
                    f"{MIN_OUTFITS_PER_USER} interacted outfits, got {outfits_per_user}"
                }
            )

    @staticmethod
    def validate_patterns(patterns, error_to_raise):
        unknown = [name for name in patterns if name not in PATTERNS]
        if not patterns or unknown:
            raise error_to_raise(
                {"patterns": f"Patterns must be a non-empty subset of {PATTERNS}"}
            )

    def clean(self):
        self.validate_delta(self.delta, ConfigError)
        self.validate_resolution(self.height, self.width, ConfigError)
        self.validate_counts(self.num_users, self.outfits_per_user, ConfigError)
        self.validate_patterns(self.patterns, ConfigError)

    def to_dict(self):
        data = asdict(self)
        data["patterns"] = list(self.patterns)
        return data


@dataclass(frozen=True)
class ItemRecord:
    item_id: int
    category_id: int
    hue: float
    pattern_id: int

    @property
    def category(self):
        return CATEGORIES[self.category_id]

    @property
    def pattern(self):
        return PATTERNS[self.pattern_id]

    def __str__(self):
        return f"{self.category} {self.item_id} (hue {self.hue:.3f}, {self.pattern})"


@dataclass(frozen=True)
class OutfitRecord:
    outfit_id: int
    user_id: int
    item_ids: tuple
    base_hue: float

    @staticmethod
    def validate_outfit(outfit_id, items, base_hue, delta, error_to_raise):
        categories = [item.category_id for item in items]
        if len(items) != len(CATEGORIES) or len(set(categories)) != len(categories):
            raise error_to_raise(
                {"item_ids": f"Outfit {outfit_id} needs one item of each category"}
            )
        for item in items:
            if circular_distance(item.hue, base_hue) > delta + 1e-12:
                raise error_to_raise(
                    {
                        "item_ids": f"Item {item.item_id} of outfit {outfit_id} is "
                        f"further than {delta} from the base hue {base_hue:.3f}"
                    }
                )

    def __str__(self):
        return f"Outfit {self.outfit_id} of user {self.user_id}"


@dataclass
class UserRecord:
    user_id: int
    preferred_hue: float
    outfit_ids: tuple
    item_ids_by_category: dict = field(default_factory=dict)

    @staticmethod
    def validate_preference(user_id, preferred_hue, outfits, delta, error_to_raise):
        if len(outfits) < MIN_OUTFITS_PER_USER:
            raise error_to_raise(
                {"outfit_ids": f"User {user_id} has fewer than {MIN_OUTFITS_PER_USER} outfits"}
            )
        for outfit in outfits:
            if circular_distance(outfit.base_hue, preferred_hue) > 2 * delta + 1e-12:
                raise error_to_raise(
                    {
                        "outfit_ids": f"{outfit} is further than {2 * delta} "
                        f"from the preferred hue of user {user_id}"
                    }
                )

    def __str__(self):
        return f"User {self.user_id}"


@dataclass
class DatasetManifest:
    config: WorldConfig
    items: dict
    outfits: dict
    users: dict
    splits: dict

    @staticmethod
    def validate_splits(users, splits, error_to_raise):
        for user in users:
            assigned = [splits.get(outfit_id) for outfit_id in user.outfit_ids]
            if any(split not in SPLITS for split in assigned):
                raise error_to_raise({"split": f"{user} has outfits without a split"})
            counts = tuple(assigned.count(split) for split in SPLITS)
            if counts != split_counts(len(user.outfit_ids)):
                raise error_to_raise(
                    {"split": f"{user} split {counts} is not 8:1:1 over its outfits"}
                )

    def clean(self):
        for outfit in self.outfits.values():
            missing = [i for i in outfit.item_ids if i not in self.items]
            if missing:
                raise DataError(f"{outfit} references unknown items {missing}")
            OutfitRecord.validate_outfit(
                outfit.outfit_id,
                [self.items[i] for i in outfit.item_ids],
                outfit.base_hue,
                self.config.delta,
                DataError,
            )
        for user in self.users.values():
            missing = [o for o in user.outfit_ids if o not in self.outfits]
            if missing:
                raise DataError(f"{user} references unknown outfits {missing}")
            UserRecord.validate_preference(
                user.user_id,
                user.preferred_hue,
                [self.outfits[o] for o in user.outfit_ids],
                self.config.delta,
                DataError,
            )
        self.validate_splits(self.users.values(), self.splits, DataError)


def collect_user_items(manifest):
    """Fill each user's per-category interacted item ids from their outfits."""
    for user in manifest.users.values():
        by_category = {index: [] for index in range(len(CATEGORIES))}
        for outfit_id in sorted(user.outfit_ids):
            for item_id in manifest.outfits[outfit_id].item_ids:
                by_category[manifest.items[item_id].category_id].append(item_id)
        user.item_ids_by_category = by_category
    return manifest


class FashionDataset:
    """A manifest plus its 8-bit item images, read-only once built."""

    def __init__(self, manifest, images):
        self.manifest = manifest
        self._images = images
        self._item_outfits = {
            item_id: outfit.outfit_id
            for outfit in manifest.outfits.values()
            for item_id in outfit.item_ids
        }

    def __len__(self):
        return len(self.manifest.items)

    @property
    def config(self):
        return self.manifest.config

    @property
    def image_shape(self):
        return 3, self.config.height, self.config.width

    def item(self, item_id):
        return self.manifest.items[item_id]

    def outfit(self, outfit_id):
        return self.manifest.outfits[outfit_id]

    def user(self, user_id):
        return self.manifest.users[user_id]

    def raw_image(self, item_id):
        return self._images[item_id]

    def image(self, item_id):
        """Item image as float64 3×H×W in [0, 1]."""
        return self._images[item_id].astype(np.float64) / 255.0

    def images(self, item_ids):
        return np.stack([self.image(item_id) for item_id in item_ids])

    def outfits_in(self, split):
        return sorted(
            outfit_id for outfit_id, name in self.manifest.splits.items() if name == split
        )

    def split_of(self, outfit_id):
        return self.manifest.splits[outfit_id]

    def user_history(self, user_id, category, exclude=(), limit=None):
        """
        Item ids of ``category`` from the user's train-split outfits, oldest
        first. ``limit`` keeps only the most recent ones.
        """
        category = category_id(category)
        excluded = set(exclude)
        history = [
            item_id
            for item_id in self.user(user_id).item_ids_by_category.get(category, [])
            if item_id not in excluded
            and self.split_of(self._outfit_of_item(item_id)) == "train"
        ]
        if limit is not None:
            history = history[-limit:] if limit > 0 else []
        return history

    def catalog(self, category):
        category = category_id(category)
        return sorted(
            item_id
            for item_id, item in self.manifest.items.items()
            if item.category_id == category
        )

    def _outfit_of_item(self, item_id):
        return self._item_outfits[item_id]
