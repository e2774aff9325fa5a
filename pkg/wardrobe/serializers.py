from rest_framework import serializers

from difashion.serializers import StrictSerializer
from wardrobe.models import (
    CATEGORIES,
    PATTERNS,
    SPLITS,
    DatasetManifest,
    ItemRecord,
    OutfitRecord,
    UserRecord,
    WorldConfig,
    collect_user_items,
)

MANIFEST_FORMAT = "difashion-world/1"


class WorldConfigSerializer(StrictSerializer):
    height = serializers.IntegerField(default=32)
    width = serializers.IntegerField(default=32)
    delta = serializers.FloatField(default=0.08)
    num_users = serializers.IntegerField(default=200)
    outfits_per_user = serializers.IntegerField(default=30)
    patterns = serializers.ListField(
        child=serializers.ChoiceField(choices=PATTERNS), default=list(PATTERNS)
    )
    seed = serializers.IntegerField(default=0, min_value=0)

    def validate(self, attrs):
        data = super().validate(attrs)
        WorldConfig.validate_delta(data["delta"], serializers.ValidationError)
        WorldConfig.validate_resolution(
            data["height"], data["width"], serializers.ValidationError
        )
        WorldConfig.validate_counts(
            data["num_users"], data["outfits_per_user"], serializers.ValidationError
        )
        WorldConfig.validate_patterns(data["patterns"], serializers.ValidationError)
        return data

    def create(self, validated_data):
        return WorldConfig(
            **{**validated_data, "patterns": tuple(validated_data["patterns"])}
        )


class ItemSerializer(serializers.Serializer):
    item_id = serializers.IntegerField(min_value=0)
    category = serializers.ChoiceField(choices=CATEGORIES)
    hue = serializers.FloatField(min_value=0.0, max_value=1.0)
    pattern = serializers.ChoiceField(choices=PATTERNS)

    def validate_hue(self, value):
        if value >= 1.0:
            raise serializers.ValidationError("Hue must lie in [0, 1).")
        return value

    def to_representation(self, instance):
        return {
            "item_id": instance.item_id,
            "category": instance.category,
            "hue": instance.hue,
            "pattern": instance.pattern,
        }

    def create(self, validated_data):
        return ItemRecord(
            item_id=validated_data["item_id"],
            category_id=CATEGORIES.index(validated_data["category"]),
            hue=validated_data["hue"],
            pattern_id=PATTERNS.index(validated_data["pattern"]),
        )


class OutfitSerializer(serializers.Serializer):
    outfit_id = serializers.IntegerField(min_value=0)
    user_id = serializers.IntegerField(min_value=0)
    item_ids = serializers.ListField(child=serializers.IntegerField(min_value=0))
    base_hue = serializers.FloatField(min_value=0.0, max_value=1.0)
    split = serializers.ChoiceField(choices=SPLITS)


class UserSerializer(serializers.Serializer):
    user_id = serializers.IntegerField(min_value=0)
    preferred_hue = serializers.FloatField(min_value=0.0, max_value=1.0)
    outfit_ids = serializers.ListField(child=serializers.IntegerField(min_value=0))


class ManifestSerializer(serializers.Serializer):
    format = serializers.CharField()
    config = WorldConfigSerializer()
    items = ItemSerializer(many=True)
    outfits = OutfitSerializer(many=True)
    users = UserSerializer(many=True)

    def validate_format(self, value):
        if value != MANIFEST_FORMAT:
            raise serializers.ValidationError(
                f"Unsupported manifest format {value!r}, expected {MANIFEST_FORMAT!r}"
            )
        return value

    def validate(self, attrs):
        data = super().validate(attrs)
        item_ids = {item["item_id"] for item in data["items"]}
        outfit_ids = {outfit["outfit_id"] for outfit in data["outfits"]}
        for outfit in data["outfits"]:
            missing = set(outfit["item_ids"]) - item_ids
            if missing:
                raise serializers.ValidationError(
                    {"outfits": f"Outfit {outfit['outfit_id']} references unknown items {sorted(missing)}"}
                )
        for user in data["users"]:
            missing = set(user["outfit_ids"]) - outfit_ids
            if missing:
                raise serializers.ValidationError(
                    {"users": f"User {user['user_id']} references unknown outfits {sorted(missing)}"}
                )
        return data

    def to_representation(self, manifest):
        return {
            "format": MANIFEST_FORMAT,
            "config": manifest.config.to_dict(),
            "items": [
                ItemSerializer(manifest.items[key]).data for key in sorted(manifest.items)
            ],
            "outfits": [
                {
                    "outfit_id": outfit.outfit_id,
                    "user_id": outfit.user_id,
                    "item_ids": list(outfit.item_ids),
                    "base_hue": outfit.base_hue,
                    "split": manifest.splits[outfit.outfit_id],
                }
                for outfit in (manifest.outfits[key] for key in sorted(manifest.outfits))
            ],
            "users": [
                {
                    "user_id": user.user_id,
                    "preferred_hue": user.preferred_hue,
                    "outfit_ids": list(user.outfit_ids),
                }
                for user in (manifest.users[key] for key in sorted(manifest.users))
            ],
        }

    def create(self, validated_data):
        items = {}
        for item_data in validated_data["items"]:
            item = ItemSerializer().create(item_data)
            items[item.item_id] = item
        outfits, splits = {}, {}
        for outfit_data in validated_data["outfits"]:
            outfit = OutfitRecord(
                outfit_id=outfit_data["outfit_id"],
                user_id=outfit_data["user_id"],
                item_ids=tuple(outfit_data["item_ids"]),
                base_hue=outfit_data["base_hue"],
            )
            outfits[outfit.outfit_id] = outfit
            splits[outfit.outfit_id] = outfit_data["split"]
        users = {
            user_data["user_id"]: UserRecord(
                user_id=user_data["user_id"],
                preferred_hue=user_data["preferred_hue"],
                outfit_ids=tuple(user_data["outfit_ids"]),
            )
            for user_data in validated_data["users"]
        }
        manifest = DatasetManifest(
            config=WorldConfigSerializer().create(validated_data["config"]),
            items=items,
            outfits=outfits,
            users=users,
            splits=splits,
        )
        return collect_user_items(manifest)
