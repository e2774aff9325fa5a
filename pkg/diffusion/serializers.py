from rest_framework import serializers

from difashion.serializers import StrictSerializer
from diffusion.conditioning import validate_eta, validate_ratios
from diffusion.guidance import GuidanceScales
from diffusion.models import LR_PRESETS, SAMPLE_MODES, TIMESTEP_MODES, SampleRequest, TrainConfig
from wardrobe.models import CATEGORIES


class TrainConfigSerializer(StrictSerializer):
    lr_preset = serializers.ChoiceField(choices=sorted(LR_PRESETS), default="desk")
    lr = serializers.FloatField(default=None, allow_null=True)
    batch_size = serializers.IntegerField(default=8)
    total_steps = serializers.IntegerField(default=2000)
    eta = serializers.FloatField(default=0.1)
    joint_mask_ratio = serializers.FloatField(default=0.3)
    individual_mask_ratio = serializers.FloatField(default=0.2)
    T = serializers.IntegerField(default=200)
    beta_start = serializers.FloatField(default=None, allow_null=True)
    beta_end = serializers.FloatField(default=None, allow_null=True)
    seed = serializers.IntegerField(default=0, min_value=0)
    checkpoint_interval = serializers.IntegerField(default=500)
    validation_interval = serializers.IntegerField(default=250)
    validation_outfits = serializers.IntegerField(default=32, min_value=1)
    grad_clip = serializers.FloatField(default=0.0, min_value=0.0)
    timestep_mode = serializers.ChoiceField(choices=TIMESTEP_MODES, default="outfit")
    use_mutual = serializers.BooleanField(default=True)
    use_history = serializers.BooleanField(default=True)
    mutual_mlp = serializers.BooleanField(default=True)
    history_limit = serializers.IntegerField(default=None, allow_null=True, min_value=1)
    base_width = serializers.IntegerField(default=32)
    groups = serializers.IntegerField(default=8)
    time_dim = serializers.IntegerField(default=64)

    def validate(self, attrs):
        data = super().validate(attrs)
        TrainConfig.validate_lr(data["lr_preset"], data["lr"], serializers.ValidationError)
        TrainConfig.validate_counts(
            data["batch_size"], data["total_steps"], data["T"], serializers.ValidationError
        )
        TrainConfig.validate_intervals(
            data["checkpoint_interval"], data["validation_interval"], serializers.ValidationError
        )
        validate_eta(data["eta"], serializers.ValidationError)
        validate_ratios(
            data["joint_mask_ratio"], data["individual_mask_ratio"], serializers.ValidationError
        )
        return data

    def create(self, validated_data):
        return TrainConfig(**validated_data)


class GuidanceScalesSerializer(StrictSerializer):
    s_t = serializers.FloatField(default=12.0)
    s_m = serializers.FloatField(default=4.0)
    s_h = serializers.FloatField(default=4.0)

    def validate(self, attrs):
        data = super().validate(attrs)
        for name in ("s_t", "s_m", "s_h"):
            GuidanceScales.validate_scale(name, data[name], serializers.ValidationError)
        return data

    def create(self, validated_data):
        return GuidanceScales(**validated_data)


class SampleRequestSerializer(StrictSerializer):
    mode = serializers.ChoiceField(choices=SAMPLE_MODES, default="gor")
    user_id = serializers.IntegerField(default=0, min_value=0)
    categories = serializers.ListField(
        child=serializers.ChoiceField(choices=CATEGORIES), default=list(CATEGORIES)
    )
    given = serializers.DictField(
        child=serializers.IntegerField(min_value=0), default=dict
    )
    eta = serializers.FloatField(default=None, allow_null=True)
    seed = serializers.IntegerField(default=0, min_value=0)
    steps = serializers.IntegerField(default=None, allow_null=True, min_value=1)

    def validate_given(self, value):
        unknown = sorted(set(value) - set(CATEGORIES))
        if unknown:
            raise serializers.ValidationError(f"Unknown categories {unknown}")
        return value

    def validate(self, attrs):
        data = super().validate(attrs)
        categories = [CATEGORIES.index(name) for name in data["categories"]]
        given = {CATEGORIES.index(name): item_id for name, item_id in data["given"].items()}
        SampleRequest.validate_slots(data["mode"], categories, given, serializers.ValidationError)
        if data["eta"] is not None:
            validate_eta(data["eta"], serializers.ValidationError)
        return data

    def create(self, validated_data):
        scales = validated_data.get("scales", GuidanceScales())
        return SampleRequest(
            mode=validated_data["mode"],
            user_id=validated_data["user_id"],
            categories=tuple(CATEGORIES.index(name) for name in validated_data["categories"]),
            given={CATEGORIES.index(name): item_id for name, item_id in validated_data["given"].items()},
            scales=scales,
            eta=validated_data["eta"],
            seed=validated_data["seed"],
            steps=validated_data["steps"],
        )
